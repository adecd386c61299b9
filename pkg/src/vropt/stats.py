"""Per-step mini-batch statistics and the history-normalized rate regularizer.

A batch of m per-sample increments yields three per-coordinate statistics:
the mean increment, the within-batch variance (1/m normalization), and the
scale-free variance rho = variance / mean**2 (invariant under rescaling the
whole batch). The regularizer turns rho, measured against its own running
history, into a bounded multiplier on the base learning rate:

    lambda = (1 + s) / (1 + s * rho / ref),   lambda in (0, 1 + s]

with ref the running mean of rho ("mean_normalized", default) or the raw
running sum ("algorithm_literal"). Only the mean-normalized form satisfies
the identity lambda == 1 under a time-constant rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .numerics import RngStream, ShapeMismatchError, as_vector

DEFAULT_EPS_GUARD = 1e-8
DEFAULT_RHO_CAP = 1e12

MODES = ("mean_normalized", "algorithm_literal")
GRANULARITIES = ("per_parameter", "global_scalar")


@dataclass(frozen=True)
class BatchStats:
    """Statistics of one mini-batch of per-sample increments.

    ``var`` and ``scale_free`` have the same length as ``mean_increment``
    in per-parameter mode and length 1 in global-scalar mode.
    """

    mean_increment: np.ndarray
    var: np.ndarray
    scale_free: np.ndarray
    batch_size: int


@dataclass(frozen=True)
class RegularizerState:
    """History accumulators for the regularizer.

    ``omega`` is the nondecreasing running sum of rho; ``rho_bar`` is the
    running mean, updated incrementally (rho_bar += (rho - rho_bar)/t) so a
    constant rho history keeps rho_bar exactly equal to rho and the
    homoskedastic identity lambda == 1 holds in floating point.
    """

    s: float
    omega: np.ndarray
    rho_bar: np.ndarray
    t: int
    mode: str = "mean_normalized"
    eps_guard: float = DEFAULT_EPS_GUARD


def init_regularizer(
    dim: int,
    s: float = 2.0,
    mode: str = "mean_normalized",
    eps_guard: float = DEFAULT_EPS_GUARD,
) -> RegularizerState:
    if s <= 0:
        raise ValueError(f"impact factor s must be > 0, got {s}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    zeros = np.zeros(dim, dtype=np.float64)
    return RegularizerState(
        s=float(s), omega=zeros, rho_bar=zeros.copy(), t=0, mode=mode, eps_guard=eps_guard
    )


def _increment_matrix(per_sample_increments) -> np.ndarray:
    inc = np.ascontiguousarray(per_sample_increments, dtype=np.float64)
    if inc.ndim == 1:
        inc = inc.reshape(1, -1)
    if inc.ndim != 2:
        raise ValueError(f"expected an (m, d) increment matrix, got shape {inc.shape}")
    if inc.shape[0] == 0:
        raise ValueError("mini-batch is empty (m = 0)")
    return inc


def minibatch_stats(
    per_sample_increments,
    eps_guard: float = DEFAULT_EPS_GUARD,
    rho_cap: float = DEFAULT_RHO_CAP,
    granularity: str = "per_parameter",
) -> BatchStats:
    """Two-pass batch statistics.

    Coordinates with |mean| below ``eps_guard`` divide by eps_guard**2
    instead, and the resulting ratio is capped at ``rho_cap``. In
    global-scalar mode the variance and squared mean are first summed over
    coordinates, giving a single rho for the whole vector.
    """
    inc = _increment_matrix(per_sample_increments)
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}, got {granularity!r}")
    guard_sq = eps_guard * eps_guard
    mean, var, rho = _kernels.batch_mean_var_rho(inc, guard_sq, rho_cap)
    mean = np.asarray(mean)
    var = np.asarray(var)
    rho = np.asarray(rho)
    if granularity == "global_scalar":
        v_tot = _kernels.ordered_sum(np.ascontiguousarray(var))
        m_tot = _kernels.ordered_sum(np.ascontiguousarray(mean * mean))
        r = min(v_tot / max(m_tot, guard_sq), rho_cap)
        var = np.array([v_tot], dtype=np.float64)
        rho = np.array([r], dtype=np.float64)
    return BatchStats(
        mean_increment=mean, var=var, scale_free=rho, batch_size=inc.shape[0]
    )


def scale_free_one_pass(
    per_sample_increments,
    eps_guard: float = DEFAULT_EPS_GUARD,
    rho_cap: float = DEFAULT_RHO_CAP,
) -> np.ndarray:
    """One-pass form of the scale-free variance: mean(inc**2)/mean**2 - 1.

    Algebraically equal to the two-pass rho; kept as an independent route
    for agreement checks (1e-10 relative whenever |mean| clears the guard).
    """
    inc = _increment_matrix(per_sample_increments)
    m = inc.shape[0]
    mean = np.cumsum(inc, axis=0)[-1] / m
    mean_sq = np.cumsum(inc * inc, axis=0)[-1] / m
    guard_sq = eps_guard * eps_guard
    rho = mean_sq / np.maximum(mean * mean, guard_sq) - 1.0
    return np.minimum(np.maximum(rho, 0.0), rho_cap)


def update_history(state: RegularizerState, rho) -> RegularizerState:
    """Fold one step's rho into the accumulators: omega += rho, t += 1."""
    rho = as_vector(rho)
    if rho.shape[0] != state.omega.shape[0]:
        raise ShapeMismatchError(state.omega.shape[0], rho.shape[0])
    t_new = state.t + 1
    rho_bar = state.rho_bar + (rho - state.rho_bar) / t_new
    return replace(state, omega=state.omega + rho, rho_bar=rho_bar, t=t_new)


def lambda_from_ratio(rho, ref, s: float) -> np.ndarray:
    """Bounded regularizer (1+s)/(1 + s*rho/ref); 1 where ref == 0."""
    rho = np.ascontiguousarray(as_vector(rho))
    ref = np.ascontiguousarray(as_vector(ref))
    if rho.shape[0] != ref.shape[0]:
        raise ShapeMismatchError(rho.shape[0], ref.shape[0])
    return np.asarray(_kernels.bounded_lambda(rho, ref, float(s)))


def regularizer_lambda(rho, state: RegularizerState, s: float | None = None) -> np.ndarray:
    """Per-coordinate rate multiplier for the current step.

    Uses the running mean of rho as reference in mean_normalized mode and
    the running sum in algorithm_literal mode. Before any history exists
    (t == 0) the regularizer is inactive and returns ones.
    """
    rho = as_vector(rho)
    if state.t == 0:
        return np.ones_like(rho)
    ref = state.rho_bar if state.mode == "mean_normalized" else state.omega
    return lambda_from_ratio(rho, ref, state.s if s is None else s)


def sigmoid_regularizer(
    sigma_sq: float, sigma_bar_sq: float, lambda0: float, a: float | None = None
) -> float:
    """Sigmoid-bounded regularizer a / (1 + exp(lambda0/2 - (1+lambda0/2) * sbar/s)).

    With a = 1 + 1/e (the default) the value is exactly 1 when
    sigma_sq == sigma_bar_sq. The rational bounded form with
    s = impact_factor_from_lambda0(lambda0) agrees with this to first order
    in (sigma_sq - sigma_bar_sq)/sigma_bar_sq.
    """
    if sigma_sq <= 0 or sigma_bar_sq <= 0 or lambda0 <= 0:
        raise ValueError("sigma_sq, sigma_bar_sq and lambda0 must all be > 0")
    if a is None:
        a = 1.0 + 1.0 / math.e
    exponent = lambda0 / 2.0 - (1.0 + lambda0 / 2.0) * (sigma_bar_sq / sigma_sq)
    return a / (1.0 + math.exp(exponent))


def impact_factor_from_lambda0(lambda0: float) -> float:
    """Impact factor matching the sigmoid form to first order: (1+l0/2)/(e-l0/2).

    For lambda0 in the practical range (1, 5) this lands in roughly (0.5, 20).
    """
    den = math.e - lambda0 / 2.0
    if den <= 0:
        raise ValueError(f"lambda0 must be < 2e, got {lambda0}")
    return (1.0 + lambda0 / 2.0) / den


def cochran_scaling_check(
    m: int, sigma0_sq: float, rng: RngStream, n_batches: int = 10**5
) -> tuple[float, float]:
    """Monte Carlo estimates of (E[batch variance], Var[batch mean]).

    For i.i.d. per-sample noise of variance sigma0_sq the expectations are
    (m-1)/m * sigma0_sq and sigma0_sq / m, so the batch variance estimates
    (m-1) times the variance of the batch mean, and ratios of batch
    variances estimate ratios of mean-increment variances.
    """
    if m < 1:
        raise ValueError(f"batch size must be >= 1, got {m}")
    scale = math.sqrt(sigma0_sq)
    draws = rng.normals(n_batches * m).reshape(n_batches, m) * scale
    means = draws.mean(axis=1)
    v2 = ((draws - means[:, None]) ** 2).mean(axis=1)
    return float(v2.mean()), float(means.var())
