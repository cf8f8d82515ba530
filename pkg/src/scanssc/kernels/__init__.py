"""Hot kernels: compiled (Cython) when available, numpy otherwise.

The backend is chosen at import. ``SCANSSC_KERNELS=python`` forces the numpy
fallback; ``SCANSSC_KERNELS=cython`` makes a missing extension an error.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available():
    return sorted(_BACKENDS)


def set_backend(name):
    global _impl
    if name == "auto":
        name = "cython" if "cython" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ImportError(f"kernel backend {name!r} is not available (have {available()})")
    _impl = _BACKENDS[name]
    return name


def backend():
    return _impl.NAME


_impl = _pykernels
set_backend(os.environ.get("SCANSSC_KERNELS", "auto"))


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv3d_valid(xp, w):
    return _impl.conv3d_valid(_f64(xp), _f64(w))


def conv3d_valid_grad_input(g, w, padded_shape):
    return _impl.conv3d_valid_grad_input(_f64(g), _f64(w), tuple(padded_shape))


def conv3d_valid_grad_weight(xp, g, k):
    return _impl.conv3d_valid_grad_weight(_f64(xp), _f64(g), int(k))


def axis_confusion(pred, gt, axis, num_classes, ignore_label):
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    keep = gt != ignore_label
    if keep.any():
        if gt[keep].min() < 0 or gt[keep].max() >= num_classes:
            raise ValueError("ground-truth labels outside [0, num_classes) and not ignore_label")
        if pred[keep].min() < 0 or pred[keep].max() >= num_classes:
            raise ValueError("predicted labels outside [0, num_classes)")
    return _impl.axis_confusion(pred, gt, int(axis), int(num_classes), int(ignore_label))
