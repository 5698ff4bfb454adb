# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


def counter_uniform(seed, stream, index):
    cdef uint64_t[::1] idx = np.ascontiguousarray(index, dtype=np.uint64)
    cdef Py_ssize_t n = idx.shape[0], i
    cdef uint64_t key = _mix(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    key = _mix(key ^ <uint64_t>(stream & 0xFFFFFFFFFFFFFFFF))
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = <double>(_mix(key + (idx[i] + 1) * _GOLDEN) >> 11) * (1.0 / 9007199254740992.0)
    return out


def ice_lin_head(z, c, y):
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef int64_t[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = zz.shape[0], k = zz.shape[1], i, j
    loss = np.empty(n, dtype=np.float64)
    dz = np.empty((n, k), dtype=np.float64)
    dc = np.empty(n, dtype=np.float64)
    cdef double[::1] lo = loss, dco = dc
    cdef double[:, ::1] d = dz
    cdef double m, tot, py, qy, g, inv_k = 1.0 / k
    cdef int64_t t
    with nogil:
        for i in range(n):
            t = yy[i]
            m = zz[i, 0]
            for j in range(1, k):
                if zz[i, j] > m:
                    m = zz[i, j]
            tot = 0.0
            for j in range(k):
                d[i, j] = exp(zz[i, j] - m)
                tot = tot + d[i, j]
            for j in range(k):
                d[i, j] = d[i, j] / tot
            py = d[i, t]
            qy = cc[i] * py + (1.0 - cc[i]) * inv_k
            lo[i] = -log(qy)
            g = -cc[i] / qy * py
            for j in range(k):
                d[i, j] = -g * d[i, j]
            d[i, t] = d[i, t] + g
            dco[i] = -(py - inv_k) / qy
    return loss, dz, dc


def ice_pow_head(z, c, y):
    cdef double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef int64_t[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = zz.shape[0], k = zz.shape[1], i, j
    loss = np.empty(n, dtype=np.float64)
    dz = np.empty((n, k), dtype=np.float64)
    dc = np.empty(n, dtype=np.float64)
    cdef double[::1] lo = loss, dco = dc
    cdef double[:, ::1] d = dz
    cdef double ci, m, tot, mean_z
    cdef int64_t t
    with nogil:
        for i in range(n):
            t = yy[i]
            ci = cc[i]
            m = ci * zz[i, 0]
            for j in range(1, k):
                if ci * zz[i, j] > m:
                    m = ci * zz[i, j]
            tot = 0.0
            for j in range(k):
                d[i, j] = exp(ci * zz[i, j] - m)
                tot = tot + d[i, j]
            lo[i] = -(ci * zz[i, t] - m - log(tot))
            mean_z = 0.0
            for j in range(k):
                d[i, j] = d[i, j] / tot
                mean_z = mean_z + d[i, j] * zz[i, j]
                d[i, j] = ci * d[i, j]
            d[i, t] = d[i, t] - ci
            dco[i] = -(zz[i, t] - mean_z)
    return loss, dz, dc
