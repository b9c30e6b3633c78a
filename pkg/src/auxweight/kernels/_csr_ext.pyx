# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR row-aggregation kernel."""

import numpy as np

cimport numpy as cnp


def spmm(cnp.int64_t[::1] offsets, cnp.int64_t[::1] indices,
         cnp.float64_t[::1] values, cnp.float64_t[:, ::1] dense):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t d = dense.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, jj, c, j
    cdef double w
    for i in range(n):
        for jj in range(offsets[i], offsets[i + 1]):
            j = indices[jj]
            w = values[jj]
            for c in range(d):
                o[i, c] += w * dense[j, c]
    return out
