# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"


def conv3d_valid(const double[:, :, :, ::1] xp, const double[:, :, :, :, ::1] w):
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t ci = w.shape[3], co = w.shape[4]
    cdef Py_ssize_t X = xp.shape[0] - k + 1
    cdef Py_ssize_t Y = xp.shape[1] - k + 1
    cdef Py_ssize_t Z = xp.shape[2] - k + 1
    out_arr = np.zeros((X, Y, Z, co))
    if out_arr.size == 0:
        return out_arr
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t x, y, z, a, b, c, i, o
    cdef double v
    cdef const double *xr
    cdef const double *wr
    # private accumulator: no aliasing with the weights, so the o loop vectorizes
    cdef double *acc = <double *> malloc(co * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    try:
        with nogil:
            for x in range(X):
                for y in range(Y):
                    for z in range(Z):
                        for o in range(co):
                            acc[o] = 0.0
                        for a in range(k):
                            for b in range(k):
                                for c in range(k):
                                    xr = &xp[x + a, y + b, z + c, 0]
                                    wr = &w[a, b, c, 0, 0]
                                    for i in range(ci):
                                        v = xr[i]
                                        for o in range(co):
                                            acc[o] += v * wr[i * co + o]
                        for o in range(co):
                            out[x, y, z, o] = acc[o]
    finally:
        free(acc)
    return out_arr


def conv3d_valid_grad_input(const double[:, :, :, ::1] g, const double[:, :, :, :, ::1] w,
                            padded_shape):
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t ci = w.shape[3], co = w.shape[4]
    cdef Py_ssize_t X = g.shape[0], Y = g.shape[1], Z = g.shape[2]
    gxp_arr = np.zeros(padded_shape)
    if g.size == 0:
        return gxp_arr
    cdef double[:, :, :, ::1] gxp = gxp_arr
    cdef Py_ssize_t x, y, z, a, b, c, i, o
    cdef double acc
    cdef const double *gr
    cdef const double *wr
    cdef double *xr
    with nogil:
        for x in range(X):
            for y in range(Y):
                for z in range(Z):
                    gr = &g[x, y, z, 0]
                    for a in range(k):
                        for b in range(k):
                            for c in range(k):
                                xr = &gxp[x + a, y + b, z + c, 0]
                                wr = &w[a, b, c, 0, 0]
                                for i in range(ci):
                                    acc = 0.0
                                    for o in range(co):
                                        acc = acc + gr[o] * wr[i * co + o]
                                    xr[i] += acc
    return gxp_arr


def conv3d_valid_grad_weight(const double[:, :, :, ::1] xp, const double[:, :, :, ::1] g,
                             Py_ssize_t k):
    cdef Py_ssize_t ci = xp.shape[3], co = g.shape[3]
    cdef Py_ssize_t X = g.shape[0], Y = g.shape[1], Z = g.shape[2]
    gw_arr = np.zeros((k, k, k, ci, co))
    if g.size == 0 or gw_arr.size == 0:
        return gw_arr
    cdef double[:, :, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t x, y, z, a, b, c, i, o
    cdef double v
    cdef const double *gr
    cdef const double *xr
    cdef double *wr
    with nogil:
        for x in range(X):
            for y in range(Y):
                for z in range(Z):
                    gr = &g[x, y, z, 0]
                    for a in range(k):
                        for b in range(k):
                            for c in range(k):
                                xr = &xp[x + a, y + b, z + c, 0]
                                wr = &gw[a, b, c, 0, 0]
                                for i in range(ci):
                                    v = xr[i]
                                    if v == 0.0:
                                        continue
                                    for o in range(co):
                                        wr[i * co + o] += v * gr[o]
    return gw_arr


def axis_confusion(pred_in, gt_in, int axis, Py_ssize_t num_classes, long ignore_label):
    cdef cnp.int64_t[:, :, ::1] pred = np.ascontiguousarray(pred_in, dtype=np.int64)
    cdef cnp.int64_t[:, :, ::1] gt = np.ascontiguousarray(gt_in, dtype=np.int64)
    cdef Py_ssize_t L = gt.shape[axis]
    out_arr = np.zeros((L, num_classes, num_classes), dtype=np.int64)
    cdef cnp.int64_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t x, y, z, t
    cdef cnp.int64_t lab
    with nogil:
        for x in range(gt.shape[0]):
            for y in range(gt.shape[1]):
                for z in range(gt.shape[2]):
                    lab = gt[x, y, z]
                    if lab == ignore_label:
                        continue
                    if axis == 0:
                        t = x
                    elif axis == 1:
                        t = y
                    else:
                        t = z
                    out[t, lab, pred[x, y, z]] += 1
    return out_arr
