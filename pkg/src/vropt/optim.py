"""Optimizer step engines over per-sample gradient increments.

All optimizers share one functional interface: a frozen state goes in, a new
state comes out. Plain kinds (sgd, momentum, adam) consume the batch-mean
increment; variance-regularized kinds (vr_sgd, vr_adam) consume the full
(m, d) matrix of per-sample increments, because the within-batch variance is
what drives the rate regularizer.

vr_sgd multiplies the base rate by lambda from the scale-free batch variance.
vr_adam first estimates Var(mean increment) from the batch variance (divided
by m-1), propagates it through three exponential accumulators matched to the
two Adam momenta (decays beta1**2, beta2**2, beta1*beta2), combines them into
an approximate variance of the Adam increment, and regularizes on the
resulting scale-free ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels
from .stats import (
    DEFAULT_EPS_GUARD,
    DEFAULT_RHO_CAP,
    GRANULARITIES,
    MODES,
    RegularizerState,
    init_regularizer,
    minibatch_stats,
    regularizer_lambda,
    update_history,
)
from .numerics import as_vector, assert_finite

KINDS = ("sgd", "vr_sgd", "momentum", "adam", "vr_adam")

DIVERGENCE_LIMIT = 1e12


class NonFiniteGradientError(FloatingPointError):
    """A gradient fed to a step was NaN/Inf; carries the coordinate index."""

    def __init__(self, index: int):
        super().__init__(f"non-finite gradient at coordinate {index}")
        self.index = index


class DivergedError(RuntimeError):
    """An iterate left the sane region (|x| > DIVERGENCE_LIMIT)."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    alpha: float = 0.01
    s: float = 2.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    bias_correction: bool = True
    vr_mode: str = "mean_normalized"
    granularity: str = "per_parameter"
    eps_guard: float = DEFAULT_EPS_GUARD
    rho_cap: float = DEFAULT_RHO_CAP
    # Hook for a time-decaying impact factor: called with the 1-based step
    # index and must return the s to use for that step. Left None, s is
    # constant. Intentionally unspecified beyond that.
    impact_schedule: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.s <= 0:
            raise ValueError(f"s must be > 0, got {self.s}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"beta1/beta2 must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.vr_mode not in MODES:
            raise ValueError(f"vr_mode must be one of {MODES}, got {self.vr_mode!r}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")


@dataclass(frozen=True)
class OptimizerState:
    config: OptimizerConfig
    x: np.ndarray
    t: int
    m1: np.ndarray | None = None
    m2: np.ndarray | None = None
    reg: RegularizerState | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    w: np.ndarray | None = None
    # Diagnostics from the most recent step (None before the first step).
    last_lambda: np.ndarray | None = None
    last_rho: np.ndarray | None = None


def init_state(config: OptimizerConfig, x0) -> OptimizerState:
    x = np.ascontiguousarray(as_vector(x0), dtype=np.float64).copy()
    d = x.shape[0]
    zeros = lambda: np.zeros(d, dtype=np.float64)
    m1 = zeros() if config.kind in ("momentum", "adam", "vr_adam") else None
    m2 = zeros() if config.kind in ("adam", "vr_adam") else None
    reg = None
    if config.kind in ("vr_sgd", "vr_adam"):
        reg_dim = 1 if config.granularity == "global_scalar" else d
        reg = init_regularizer(
            reg_dim, s=config.s, mode=config.vr_mode, eps_guard=config.eps_guard
        )
    u = zeros() if config.kind == "vr_adam" else None
    return OptimizerState(
        config=config, x=x, t=0, m1=m1, m2=m2, reg=reg,
        u=u, v=zeros() if u is not None else None, w=zeros() if u is not None else None,
    )


def _checked_mean(mean_increment) -> np.ndarray:
    d = np.ascontiguousarray(as_vector(mean_increment))
    bad = ~np.isfinite(d)
    if bad.any():
        raise NonFiniteGradientError(int(np.argmax(bad)))
    return d


def _check_divergence(x: np.ndarray) -> np.ndarray:
    if np.abs(x).max(initial=0.0) > DIVERGENCE_LIMIT:
        raise DivergedError(f"iterate magnitude exceeded {DIVERGENCE_LIMIT:g}")
    return x


def sgd_step(state: OptimizerState, mean_increment) -> OptimizerState:
    """x <- x - alpha * mean_increment."""
    d = _checked_mean(mean_increment)
    x = _check_divergence(np.asarray(_kernels.scaled_step(state.x, state.config.alpha, None, d)))
    return replace(state, x=x, t=state.t + 1)


def momentum_step(state: OptimizerState, mean_increment) -> OptimizerState:
    """Heavy-ball: m1 <- beta1*m1 + (1-beta1)*d; x <- x - alpha*m1."""
    d = _checked_mean(mean_increment)
    m1 = np.asarray(_kernels.ema_update(state.m1, state.config.beta1, d))
    x = _check_divergence(np.asarray(_kernels.scaled_step(state.x, state.config.alpha, None, m1)))
    return replace(state, x=x, t=state.t + 1, m1=m1)


def _adam_core(state: OptimizerState, d: np.ndarray):
    cfg = state.config
    m1 = np.asarray(_kernels.ema_update(state.m1, cfg.beta1, d))
    m2 = np.asarray(_kernels.ema_update(state.m2, cfg.beta2, d * d))
    t_new = state.t + 1
    if cfg.bias_correction:
        c1 = 1.0 - cfg.beta1 ** t_new
        c2 = 1.0 - cfg.beta2 ** t_new
    else:
        c1 = c2 = 1.0
    inc = np.asarray(_kernels.adam_increment(m1, m2, c1, c2, cfg.adam_eps))
    return m1, m2, c2, inc


def adam_step(state: OptimizerState, mean_increment) -> OptimizerState:
    """Adam: EMA of increments and squared increments, rate-normalized update."""
    d = _checked_mean(mean_increment)
    m1, m2, _, inc = _adam_core(state, d)
    x = _check_divergence(np.asarray(_kernels.scaled_step(state.x, state.config.alpha, None, inc)))
    return replace(state, x=x, t=state.t + 1, m1=m1, m2=m2)


def _step_s(cfg: OptimizerConfig, t_new: int) -> float:
    if cfg.impact_schedule is None:
        return cfg.s
    s = float(cfg.impact_schedule(t_new))
    if s <= 0:
        raise ValueError(f"impact_schedule returned non-positive s={s} at step {t_new}")
    return s


def vr_sgd_step(state: OptimizerState, per_sample_increments) -> OptimizerState:
    """SGD with the rate multiplied per coordinate by the bounded regularizer."""
    cfg = state.config
    stats = minibatch_stats(
        per_sample_increments, eps_guard=cfg.eps_guard, rho_cap=cfg.rho_cap,
        granularity=cfg.granularity,
    )
    d = _checked_mean(stats.mean_increment)
    reg = update_history(state.reg, stats.scale_free)
    lam = regularizer_lambda(stats.scale_free, reg, s=_step_s(cfg, state.t + 1))
    x = _check_divergence(
        np.asarray(_kernels.scaled_step(state.x, cfg.alpha, np.ascontiguousarray(lam), d))
    )
    return replace(
        state, x=x, t=state.t + 1, reg=reg, last_lambda=lam, last_rho=stats.scale_free
    )


def adam_variance_recursions(u, v, w, sigma_sq, beta1: float, beta2: float):
    """Advance the three momentum-variance accumulators one step.

    u' = b1^2 u + (1 - b1^2) sigma_sq      (matches the first-moment EMA)
    v' = b2^2 v + (1 - b2^2) sigma_sq      (matches the second-moment EMA)
    w' = b1 b2 w + (1 - b1 b2) sigma_sq    (cross term)

    Returns (u', v', w', var1, var2, cross) where the last three are the
    stationary rescalings (1-b1)^2/(1-b1^2)*u' etc. that turn accumulators
    into variance-like terms for the increment-variance combination.
    """
    if beta1 * beta2 >= 1.0:
        raise ValueError("beta1*beta2 must be < 1 (degenerate denominators)")
    u = as_vector(u)
    v = as_vector(v)
    w = as_vector(w)
    sigma_sq = as_vector(sigma_sq)
    b1sq, b2sq, b12 = beta1 * beta1, beta2 * beta2, beta1 * beta2
    u_new = np.asarray(_kernels.ema_update(u, b1sq, sigma_sq))
    v_new = np.asarray(_kernels.ema_update(v, b2sq, sigma_sq))
    w_new = np.asarray(_kernels.ema_update(w, b12, sigma_sq))
    var1 = (1.0 - beta1) ** 2 / (1.0 - b1sq) * u_new
    var2 = (1.0 - beta2) ** 2 / (1.0 - b2sq) * v_new
    cross = (1.0 - beta1) * (1.0 - beta2) / (1.0 - b12) * w_new
    return u_new, v_new, w_new, var1, var2, cross


def adam_increment_variance(var1, var2, cross, increment, second_moment, eps_guard):
    """Approximate Var of the Adam increment: (var1 - 2*d*cross + d^2*var2)/m2.

    ``increment`` stands in for the unobservable expected increment and
    ``second_moment`` for the squared-momentum normalizer. Clamped at zero:
    the combination is a lowest-order approximation and can dip negative.
    """
    inc = as_vector(increment)
    m2 = np.maximum(as_vector(second_moment), eps_guard * eps_guard)
    raw = (as_vector(var1) - 2.0 * inc * as_vector(cross) + inc * inc * as_vector(var2)) / m2
    return np.maximum(raw, 0.0)


def vr_adam_step(state: OptimizerState, per_sample_increments) -> OptimizerState:
    """Adam with the rate regularized by the estimated increment variance.

    Needs m >= 2: the within-batch variance over m-1 estimates the variance
    of the batch mean, which feeds the momentum-variance recursions.
    """
    cfg = state.config
    # Per-coordinate stats regardless of granularity; global mode collapses
    # only the final rho.
    stats = minibatch_stats(
        per_sample_increments, eps_guard=cfg.eps_guard, rho_cap=cfg.rho_cap,
        granularity="per_parameter",
    )
    if stats.batch_size < 2:
        raise ValueError("vr_adam needs a mini-batch of at least 2 samples")
    d = _checked_mean(stats.mean_increment)
    m1, m2, c2, inc = _adam_core(state, d)

    # Batch variance -> variance of the batch mean.
    sigma_sq = stats.var / (stats.batch_size - 1)
    u, v, w, var1, var2, cross = adam_variance_recursions(
        state.u, state.v, state.w, sigma_sq, cfg.beta1, cfg.beta2
    )
    # The normalizer must carry the same bias correction as the increment,
    # or early steps see a hugely inflated variance that poisons the history.
    inc_var = adam_increment_variance(var1, var2, cross, inc, m2 / c2, cfg.eps_guard)
    guard_sq = cfg.eps_guard * cfg.eps_guard
    if cfg.granularity == "global_scalar":
        num = _kernels.ordered_sum(np.ascontiguousarray(inc_var))
        den = _kernels.ordered_sum(np.ascontiguousarray(inc * inc))
        rho = np.array([min(num / max(den, guard_sq), cfg.rho_cap)])
    else:
        rho = np.minimum(inc_var / np.maximum(inc * inc, guard_sq), cfg.rho_cap)

    reg = update_history(state.reg, rho)
    lam = regularizer_lambda(rho, reg, s=_step_s(cfg, state.t + 1))
    x = _check_divergence(
        np.asarray(_kernels.scaled_step(state.x, cfg.alpha, np.ascontiguousarray(lam), inc))
    )
    return replace(
        state, x=x, t=state.t + 1, m1=m1, m2=m2, reg=reg, u=u, v=v, w=w,
        last_lambda=lam, last_rho=rho,
    )


def step(state: OptimizerState, per_sample_increments) -> OptimizerState:
    """Kind dispatch over an (m, d) matrix of per-sample increments."""
    kind = state.config.kind
    if kind == "vr_sgd":
        return vr_sgd_step(state, per_sample_increments)
    if kind == "vr_adam":
        return vr_adam_step(state, per_sample_increments)
    stats = minibatch_stats(per_sample_increments)
    if kind == "sgd":
        return sgd_step(state, stats.mean_increment)
    if kind == "momentum":
        return momentum_step(state, stats.mean_increment)
    return adam_step(state, stats.mean_increment)


def effective_rates(state: OptimizerState) -> np.ndarray | None:
    """alpha * lambda applied at the last step; None before any VR step."""
    if state.last_lambda is None:
        return None
    return state.config.alpha * state.last_lambda
