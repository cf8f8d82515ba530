"""Numpy implementations of the hot kernels.

Layout is channels-last without a batch axis: volumes are (X, Y, Z, C) and
conv weights are (k, k, k, C_in, C_out). All convolutions here are "valid";
padding is applied by the caller.
"""

import numpy as np

NAME = "python"


def conv3d_valid(xp, w):
    k = w.shape[0]
    X, Y, Z = (n - k + 1 for n in xp.shape[:3])
    out = np.zeros((X, Y, Z, w.shape[4]))
    for a in range(k):
        for b in range(k):
            for c in range(k):
                out += xp[a:a + X, b:b + Y, c:c + Z] @ w[a, b, c]
    return out


def conv3d_valid_grad_input(g, w, padded_shape):
    k = w.shape[0]
    X, Y, Z = g.shape[:3]
    gxp = np.zeros(padded_shape)
    for a in range(k):
        for b in range(k):
            for c in range(k):
                gxp[a:a + X, b:b + Y, c:c + Z] += g @ w[a, b, c].T
    return gxp


def conv3d_valid_grad_weight(xp, g, k):
    X, Y, Z = g.shape[:3]
    gw = np.empty((k, k, k, xp.shape[3], g.shape[3]))
    for a in range(k):
        for b in range(k):
            for c in range(k):
                patch = xp[a:a + X, b:b + Y, c:c + Z]
                gw[a, b, c] = np.tensordot(patch, g, axes=([0, 1, 2], [0, 1, 2]))
    return gw


def axis_confusion(pred, gt, axis, num_classes, ignore_label):
    """Confusion matrices per index along ``axis``: shape (L, P, P), [gt, pred]."""
    L = gt.shape[axis]
    P = num_classes
    idx = np.broadcast_to(
        np.arange(L).reshape([-1 if i == axis else 1 for i in range(3)]), gt.shape
    )
    keep = gt != ignore_label
    flat = (idx[keep].astype(np.int64) * P + gt[keep]) * P + pred[keep]
    return np.bincount(flat, minlength=L * P * P).reshape(L, P, P)
