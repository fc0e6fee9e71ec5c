# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling and risk kernels.

Bit-identical to ``_fallback.py``; build with ``-ffp-contract=off``.
"""
import numpy as np

from libc.math cimport fabs
from libc.stdint cimport uint64_t
from scipy.special.cython_special cimport ndtri

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t ctr) noexcept nogil:
    cdef uint64_t bits = _mix(key + (ctr + 1) * GOLDEN)
    return (<double>(bits >> 11) + 0.5) * TWO_M53


def uniform_block(key, row0, Py_ssize_t n_rows, stride, col0, Py_ssize_t n_cols):
    out = np.empty((n_rows, n_cols))
    cdef double[:, ::1] o = out
    cdef uint64_t k = key, r0 = row0, st = stride, c0 = col0
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n_rows):
            for j in range(n_cols):
                o[i, j] = _uniform(k, (r0 + i) * st + c0 + j)
    return out


def normal_block(key, row0, Py_ssize_t n_rows, stride, col0, Py_ssize_t n_cols):
    out = np.empty((n_rows, n_cols))
    cdef double[:, ::1] o = out
    cdef uint64_t k = key, r0 = row0, st = stride, c0 = col0
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n_rows):
            for j in range(n_cols):
                o[i, j] = ndtri(_uniform(k, (r0 + i) * st + c0 + j))
    return out


def risk_terms(y, s, u):
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0], i
    out = np.empty((n, 5))
    cdef double[:, ::1] o = out
    cdef double yi, si, t, yt
    with nogil:
        for i in range(n):
            yi = yv[i]
            si = sv[i]
            t = 1.0 - yi
            o[i, 0] = yi if yi < t else t
            t = ((1.0 - si) - fabs((1.0 + si) - 2.0 * yi)) * 0.5
            o[i, 1] = 0.0 if t < 0.0 else t
            if uv[i] < si:
                o[i, 2] = 0.0
                o[i, 3] = 1.0
            else:
                yt = (yi - si) / (1.0 - si)
                t = (1.0 - fabs(2.0 * yt - 1.0)) * 0.5
                o[i, 2] = 0.0 if t < 0.0 else t
                o[i, 3] = 0.0
            o[i, 4] = si if yi < 0.5 else 0.0
    return out
