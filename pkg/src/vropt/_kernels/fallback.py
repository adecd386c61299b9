"""Pure-numpy kernel implementations.

Bit-identical twins of the compiled kernels in ``_core.pyx``: same operation
order, same guards. Ordered reductions use ``np.cumsum`` (whose accumulation
is the sequential left-to-right recurrence) instead of ``np.sum`` (pairwise).
"""

import numpy as np


def ordered_sum(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a)[-1])


def guarded_divide(num, den, eps):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    clamped = np.where(np.abs(den) < eps, np.where(den >= 0.0, eps, -eps), den)
    return num / clamped


def batch_mean_var_rho(inc, guard_sq, rho_cap):
    inc = np.asarray(inc, dtype=np.float64)
    m = inc.shape[0]
    mean = np.cumsum(inc, axis=0)[-1] / m
    dev = inc - mean
    var = np.cumsum(dev * dev, axis=0)[-1] / m
    rho = np.minimum(var / np.maximum(mean * mean, guard_sq), rho_cap)
    return mean, var, rho


def bounded_lambda(rho, ref, s):
    rho = np.asarray(rho, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    safe = np.where(ref == 0.0, 1.0, ref)
    lam = (1.0 + s) / (1.0 + s * (rho / safe))
    return np.where(ref == 0.0, 1.0, lam)


def scaled_step(x, alpha, scale, delta):
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if scale is None:
        return x - alpha * delta
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape[0] == 1 and x.shape[0] != 1:
        scale = scale[0]
    return x - alpha * (scale * delta)


def ema_update(acc, beta, val):
    acc = np.asarray(acc, dtype=np.float64)
    val = np.asarray(val, dtype=np.float64)
    return beta * acc + (1.0 - beta) * val


def adam_increment(m1, m2, c1, c2, eps):
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    return (m1 / c1) / (np.sqrt(m2 / c2) + eps)
