# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-bond covariance kernels (hot path of the Monte Carlo)."""

from libc.math cimport tanh, log, log1p, cosh
from libc.stdlib cimport malloc, free

import numpy as np

BACKEND = "compiled"


cdef double _bond(double[:, ::1] G, Py_ssize_t a, Py_ssize_t b,
                  double eta, double tau, double* u, double* v) nogil:
    cdef Py_ssize_t n = G.shape[0]
    cdef double t = tanh(0.5 * tau) * eta
    cdef double th = tanh(tau) * eta
    cdef double m = G[a, b]
    cdef double D = (1.0 + t * t) + 2.0 * t * m
    cdef double c = 2.0 * t / D
    cdef double fac = (1.0 - t * t) / D
    cdef Py_ssize_t k, l
    cdef double uk, vk
    for k in range(n):
        u[k] = G[k, a]
        v[k] = G[k, b]
    for k in range(n):
        uk = c * u[k]
        vk = c * v[k]
        if uk == 0.0 and vk == 0.0:
            continue
        for l in range(n):
            G[k, l] -= uk * v[l] - vk * u[l]
    for k in range(n):
        G[k, a] = fac * u[k]
        G[a, k] = -fac * u[k]
        G[k, b] = fac * v[k]
        G[b, k] = -fac * v[k]
    G[a, b] = ((1.0 + t * t) * m + 2.0 * t) / D
    G[b, a] = -G[a, b]
    G[a, a] = 0.0
    G[b, b] = 0.0
    return log(cosh(tau)) + log1p(th * m)


def apply_bond(double[:, ::1] G, Py_ssize_t a, Py_ssize_t b, double eta, double tau):
    """Two-sided single-bond update of G in place; returns d ln Tr."""
    cdef Py_ssize_t n = G.shape[0]
    cdef double* buf = <double*> malloc(2 * n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        return _bond(G, a, b, eta, tau, buf, buf + n)
    finally:
        free(buf)


def apply_slots(double[:, ::1] G, long[::1] slot_a, long[::1] slot_b,
                signed char[::1] eta, double tau, Py_ssize_t start, Py_ssize_t stop):
    """Apply slots [start, stop) in order; returns total d ln Tr."""
    cdef double dlnw = 0.0
    cdef Py_ssize_t k
    cdef Py_ssize_t n = G.shape[0]
    cdef double* buf = <double*> malloc(2 * n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for k in range(start, stop):
                dlnw += _bond(G, slot_a[k], slot_b[k], eta[k], tau, buf, buf + n)
        return dlnw
    finally:
        free(buf)
