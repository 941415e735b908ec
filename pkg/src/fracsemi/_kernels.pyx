# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense pair kernels; same contract as ``_kernels_py``."""
from libc.math cimport fabs, pow

import numpy as np


cdef inline double _phi(double d, double p) nogil:
    # |d|^{p-2} d
    if p == 2.0:
        return d
    if p == 3.0:
        return fabs(d) * d
    if d == 0.0:
        return 0.0
    return pow(fabs(d), p - 2.0) * d


def pair_energy(double[::1] U, double[:, ::1] W, double p):
    cdef Py_ssize_t P = U.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, row, d
    with nogil:
        for i in range(P):
            row = 0.0
            for j in range(i + 1, P):
                d = U[i] - U[j]
                row = row + W[i, j] * _phi(d, p) * d
            total = total + row
    return total


def pair_grad(double[::1] U, double[:, ::1] W, double p):
    cdef Py_ssize_t P = U.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, acc, d, t
    g_arr = np.zeros(P)
    cdef double[::1] g = g_arr
    with nogil:
        for i in range(P):
            acc = 0.0
            for j in range(i + 1, P):
                d = U[i] - U[j]
                t = W[i, j] * _phi(d, p)
                acc = acc + t
                g[j] = g[j] - p * t
                total = total + t * d
            g[i] = g[i] + p * acc
    return total, g_arr
