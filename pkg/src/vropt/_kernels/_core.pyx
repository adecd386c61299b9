# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-path kernels.

Every kernel here has a numpy twin in ``fallback.py`` with the exact same
operation order, so the two backends produce bit-identical float64 results.
Keep transcendental functions (log, exp, cos) out of this module: those go
through numpy ufuncs in shared code so backend choice can never change bits.
"""

from libc.math cimport fabs, sqrt

import numpy as np


def ordered_sum(const double[::1] a):
    """Strict left-to-right sum (no pairwise reassociation)."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc = acc + a[i]
    return acc


def guarded_divide(const double[::1] num, const double[::1] den, double eps):
    """Elementwise num/den with |den| clamped to eps (sign of 0 is +)."""
    cdef Py_ssize_t j, n = num.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double d
    for j in range(n):
        d = den[j]
        if fabs(d) < eps:
            d = eps if d >= 0.0 else -eps
        o[j] = num[j] / d
    return out


def batch_mean_var_rho(const double[:, ::1] inc, double guard_sq, double rho_cap):
    """Fused per-coordinate batch statistics over an (m, d) increment matrix.

    mean[j] = (sum_i inc[i, j]) / m            (left-to-right over i)
    var[j]  = (sum_i (inc[i, j] - mean[j])^2) / m
    rho[j]  = min(var[j] / max(mean[j]^2, guard_sq), rho_cap)
    """
    cdef Py_ssize_t i, j, m = inc.shape[0], d = inc.shape[1]
    mean = np.empty(d, dtype=np.float64)
    var = np.empty(d, dtype=np.float64)
    rho = np.empty(d, dtype=np.float64)
    cdef double[::1] mu = mean
    cdef double[::1] vv = var
    cdef double[::1] rr = rho
    cdef double acc, dev, den, r
    for j in range(d):
        acc = 0.0
        for i in range(m):
            acc = acc + inc[i, j]
        mu[j] = acc / m
    for j in range(d):
        acc = 0.0
        for i in range(m):
            dev = inc[i, j] - mu[j]
            acc = acc + dev * dev
        vv[j] = acc / m
    for j in range(d):
        den = mu[j] * mu[j]
        if den < guard_sq:
            den = guard_sq
        r = vv[j] / den
        if r > rho_cap:
            r = rho_cap
        rr[j] = r
    return mean, var, rho


def bounded_lambda(const double[::1] rho, const double[::1] ref, double s):
    """Bounded step-size regularizer (1+s) / (1 + s * rho/ref), 1 where ref == 0."""
    cdef Py_ssize_t j, n = rho.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for j in range(n):
        if ref[j] == 0.0:
            o[j] = 1.0
        else:
            o[j] = (1.0 + s) / (1.0 + s * (rho[j] / ref[j]))
    return out


def scaled_step(const double[::1] x, double alpha, scale, const double[::1] delta):
    """x - alpha * scale * delta; scale may be None, a length-d vector, or length-1."""
    cdef Py_ssize_t j, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef const double[::1] sc
    cdef double s0
    if scale is None:
        for j in range(n):
            o[j] = x[j] - alpha * delta[j]
    else:
        sc = scale
        if sc.shape[0] == 1 and n != 1:
            s0 = sc[0]
            for j in range(n):
                o[j] = x[j] - alpha * (s0 * delta[j])
        else:
            for j in range(n):
                o[j] = x[j] - alpha * (sc[j] * delta[j])
    return out


def ema_update(const double[::1] acc, double beta, const double[::1] val):
    """beta * acc + (1 - beta) * val, elementwise."""
    cdef Py_ssize_t j, n = acc.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double g = 1.0 - beta
    for j in range(n):
        o[j] = beta * acc[j] + g * val[j]
    return out


def adam_increment(const double[::1] m1, const double[::1] m2,
                   double c1, double c2, double eps):
    """(m1/c1) / (sqrt(m2/c2) + eps); c1, c2 are bias-correction divisors."""
    cdef Py_ssize_t j, n = m1.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for j in range(n):
        o[j] = (m1[j] / c1) / (sqrt(m2[j] / c2) + eps)
    return out
