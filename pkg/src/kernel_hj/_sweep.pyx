# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled left-to-right exponential sweeps (see ``_sweep_py`` for the reference)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sweep(const double[:, ::1] J, const double[::1] decay):
    cdef Py_ssize_t m = J.shape[0], n = J.shape[1], line, c
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] I = out
    cdef double acc
    with nogil:
        for line in range(m):
            acc = 0.0
            for c in range(1, n):
                acc = decay[c] * acc + J[line, c]
                I[line, c] = acc
    return out


def quad_sweep(const double[:, ::1] v, const long[:, ::1] gather,
               const double[:, ::1] weights, const double[::1] decay):
    cdef Py_ssize_t m = v.shape[0], n = v.shape[1], width = gather.shape[1]
    cdef Py_ssize_t line, c, j
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] I = out
    cdef double acc, jc
    with nogil:
        for line in range(m):
            acc = 0.0
            for c in range(1, n):
                jc = 0.0
                for j in range(width):
                    jc = jc + weights[c - 1, j] * v[line, gather[c - 1, j]]
                acc = decay[c] * acc + jc
                I[line, c] = acc
    return out
