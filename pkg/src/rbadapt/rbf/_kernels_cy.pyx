# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled radial kernel evaluation (hot loop of surrogate fitting/evaluation)."""

import numpy as np

from libc.math cimport exp, log, sqrt

GAUSSIAN, TPS, MQ, IMQ = 0, 1, 2, 3


def kernel_matrix(a, b, int kind, double sigma):
    """Phi(||a_i - b_j||) for all pairs; shape (len(a), len(b))."""
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], d = av.shape[1]
    if bv.shape[1] != d:
        raise ValueError("dimension mismatch between point sets")
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, k
    cdef double r2, diff, s2 = sigma * sigma
    for i in range(na):
        for j in range(nb):
            r2 = 0.0
            for k in range(d):
                diff = av[i, k] - bv[j, k]
                r2 += diff * diff
            if kind == 0:
                ov[i, j] = exp(-s2 * r2)
            elif kind == 1:
                ov[i, j] = 0.5 * r2 * log(r2) if r2 > 0.0 else 0.0
            elif kind == 2:
                ov[i, j] = sqrt(r2 + s2)
            elif kind == 3:
                ov[i, j] = 1.0 / sqrt(r2 + s2)
            else:
                raise ValueError(f"unknown kernel code {kind}")
    return out
