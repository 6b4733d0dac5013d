# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_kernels_py``: fused per-step vector kernels.

Same signatures and same elementwise formula order as the pure-python
backend. Loops are sequential on purpose; no -ffast-math, no threading,
so results are deterministic and reproducible across runs.
"""

import numpy as np

cimport cython
from libc.math cimport sqrt

NAME = "cython"


def l2_norm(const double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += x[i] * x[i]
    return sqrt(s)


def normalize_or_zero(const double[::1] g):
    cdef Py_ssize_t i, n = g.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += g[i] * g[i]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double nrm = sqrt(s)
    if nrm == 0.0:
        for i in range(n):
            o[i] = 0.0
        return out
    for i in range(n):
        o[i] = g[i] / nrm
    return out


def axpy(double a, const double[::1] x, const double[::1] y):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = a * x[i] + y[i]
    return out


def combine(double a, const double[::1] x, double b, const double[::1] y):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = a * x[i] + b * y[i]
    return out


def sgd_momentum_step(const double[::1] x, const double[::1] v,
                      const double[::1] g, double eta, double mu, double wd):
    cdef Py_ssize_t i, n = x.shape[0]
    x_new = np.empty(n, dtype=np.float64)
    v_new = np.empty(n, dtype=np.float64)
    cdef double[::1] xo = x_new
    cdef double[::1] vo = v_new
    cdef double gg
    for i in range(n):
        gg = g[i] + wd * x[i]
        vo[i] = mu * v[i] + gg
        xo[i] = x[i] - eta * vo[i]
    return x_new, v_new


def adamw_step(const double[::1] x, const double[::1] m1, const double[::1] m2,
               const double[::1] g, double eta, double b1, double b2,
               double eps, double wd, long step):
    cdef Py_ssize_t i, n = x.shape[0]
    x_new = np.empty(n, dtype=np.float64)
    m1_new = np.empty(n, dtype=np.float64)
    m2_new = np.empty(n, dtype=np.float64)
    cdef double[::1] xo = x_new
    cdef double[::1] m1o = m1_new
    cdef double[::1] m2o = m2_new
    cdef double bc1 = 1.0 - b1 ** step
    cdef double bc2 = 1.0 - b2 ** step
    cdef double denom
    for i in range(n):
        m1o[i] = b1 * m1[i] + (1.0 - b1) * g[i]
        m2o[i] = b2 * m2[i] + (1.0 - b2) * (g[i] * g[i])
        denom = sqrt(m2o[i] / bc2) + eps
        xo[i] = x[i] - eta * ((m1o[i] / bc1) / denom) - (eta * wd) * x[i]
    return x_new, m1_new, m2_new
