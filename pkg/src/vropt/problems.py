"""Differentiable test objectives with per-sample losses and gradients.

Every problem exposes per-sample quantities because the variance machinery
consumes individual sample gradients, not just batch means. Convex members
(quadratic, linear, logistic) also publish their smoothness constant and,
where available, the exact optimum, so convergence bounds can be evaluated
against ground truth.

Synthetic noise is injected additively on gradients (never on data), so the
per-step noise variance is exactly the scheduled value; dataset problems get
natural sampling noise only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, as_vector


class Problem:
    """Base interface: flat float64 parameter vector, per-sample losses/grads."""

    dim: int
    n_samples: int | None = None
    x_star: np.ndarray | None = None
    f_star: float | None = None
    lipschitz: float | None = None
    strong_convexity: float | None = None

    def full_loss(self, x) -> float:
        raise NotImplementedError

    def full_grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def per_sample_loss(self, x, i: int) -> float:
        raise NotImplementedError

    def per_sample_grad(self, x, i: int) -> np.ndarray:
        raise NotImplementedError

    def per_sample_grads(self, x, indices) -> np.ndarray:
        """(m, d) matrix of per-sample gradients; default loops single passes."""
        x = as_vector(x)
        return np.stack([self.per_sample_grad(x, int(i)) for i in indices])

    def subset_loss(self, x, indices) -> float:
        """Mean loss over a subset of samples; default loops single passes."""
        x = as_vector(x)
        total = 0.0
        for i in indices:
            total += self.per_sample_loss(x, int(i))
        return total / len(indices)

    def initial_point(self, rng: RngStream) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.float64)


class QuadraticProblem(Problem):
    """f(x) = (l/2) ||x||^2 with optional additive gradient noise per schedule.

    The optimum is 0, the smoothness and strong-convexity constants are both
    l. "Samples" are synthetic: a per-sample gradient is the true gradient
    plus one scheduled noise draw, so batch statistics are exactly
    controllable.
    """

    def __init__(self, l: float, dim: int, noise: "NoiseSchedule | None" = None,
                 x0_scale: float = 1.0):
        if l <= 0:
            raise ValueError(f"curvature l must be > 0, got {l}")
        self.l = float(l)
        self.dim = int(dim)
        self.noise = noise
        self.x0_scale = float(x0_scale)
        self.x_star = np.zeros(self.dim, dtype=np.float64)
        self.f_star = 0.0
        self.lipschitz = self.l
        self.strong_convexity = self.l

    def full_loss(self, x) -> float:
        x = as_vector(x)
        return 0.5 * self.l * float(x @ x)

    def full_grad(self, x) -> np.ndarray:
        return self.l * as_vector(x)

    def initial_point(self, rng: RngStream) -> np.ndarray:
        return np.full(self.dim, self.x0_scale, dtype=np.float64)


def quadratic_problem(l: float, dim: int, noise: "NoiseSchedule | None" = None,
                      x0_scale: float = 1.0) -> QuadraticProblem:
    return QuadraticProblem(l, dim, noise, x0_scale)


class LinearRegressionProblem(Problem):
    """Ridge-regularized least squares with a closed-form optimum.

    per-sample loss: 0.5*(w.x_i - y_i)^2 + (ridge/2)*||w||^2 / N
    """

    def __init__(self, features, targets, ridge: float = 0.0):
        X = np.asarray(features, dtype=np.float64)
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("dataset must be a non-empty (N, d) matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"feature/target count mismatch: {X.shape[0]} vs {y.shape[0]}")
        if ridge < 0:
            raise ValueError("ridge must be >= 0")
        self.X, self.y, self.ridge = X, y, float(ridge)
        self.n_samples, self.dim = X.shape
        gram = X.T @ X + self.ridge * np.eye(self.dim)
        self.x_star = np.linalg.solve(gram, X.T @ y)
        self.f_star = self.full_loss(self.x_star)
        # hessian of the mean loss: X^T X / N + ridge/N * I
        eigs = np.linalg.eigvalsh(gram / self.n_samples)
        self.lipschitz = float(eigs[-1])
        self.strong_convexity = float(max(eigs[0], 0.0))

    def per_sample_loss(self, x, i: int) -> float:
        x = as_vector(x)
        r = float(self.X[i] @ x - self.y[i])
        return 0.5 * r * r + 0.5 * self.ridge * float(x @ x) / self.n_samples

    def per_sample_grad(self, x, i: int) -> np.ndarray:
        x = as_vector(x)
        r = float(self.X[i] @ x - self.y[i])
        return r * self.X[i] + (self.ridge / self.n_samples) * x

    def subset_loss(self, x, indices) -> float:
        x = as_vector(x)
        idx = np.asarray(indices, dtype=np.int64)
        r = self.X[idx] @ x - self.y[idx]
        return 0.5 * float(r @ r) / len(idx) + \
            0.5 * self.ridge * float(x @ x) / self.n_samples

    def full_loss(self, x) -> float:
        x = as_vector(x)
        r = self.X @ x - self.y
        return 0.5 * float(r @ r) / self.n_samples + \
            0.5 * self.ridge * float(x @ x) / self.n_samples

    def full_grad(self, x) -> np.ndarray:
        x = as_vector(x)
        return self.X.T @ (self.X @ x - self.y) / self.n_samples + \
            (self.ridge / self.n_samples) * x


def linear_regression_problem(features, targets, ridge: float = 0.0) -> LinearRegressionProblem:
    return LinearRegressionProblem(features, targets, ridge)


def _log1pexp(z: np.ndarray) -> np.ndarray:
    # numerically stable log(1 + exp(z))
    out = np.empty_like(z)
    pos = z > 0
    out[pos] = z[pos] + np.log1p(np.exp(-z[pos]))
    out[~pos] = np.log1p(np.exp(z[~pos]))
    return out


class LogisticRegressionProblem(Problem):
    """Binary logistic regression, labels in {0, 1}.

    per-sample loss: log(1 + exp(-(2y-1) * w.x)). The smoothness constant is
    bounded by 0.25 * max ||x_i||^2 (sigmoid derivative <= 1/4); a 5% margin
    is added since the bound is only an estimate of the operative constant.
    """

    def __init__(self, features, labels):
        X = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("dataset must be a non-empty (N, d) matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"feature/label count mismatch: {X.shape[0]} vs {y.shape[0]}")
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("labels must be 0 or 1")
        self.X, self.y = X, y
        self.signs = 2.0 * y - 1.0
        self.n_samples, self.dim = X.shape
        self.lipschitz = 0.25 * float((X * X).sum(axis=1).max()) * 1.05

    def per_sample_loss(self, x, i: int) -> float:
        z = -self.signs[i] * float(self.X[i] @ as_vector(x))
        return float(_log1pexp(np.array([z]))[0])

    def per_sample_grad(self, x, i: int) -> np.ndarray:
        z = self.signs[i] * float(self.X[i] @ as_vector(x))
        sig = 1.0 if z <= -35.0 else 1.0 / (1.0 + math.exp(min(z, 35.0)))  # sigmoid(-z)
        return -self.signs[i] * sig * self.X[i]

    def per_sample_grads(self, x, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        Xb = self.X[idx]
        sg = self.signs[idx]
        z = sg * (Xb @ as_vector(x))
        sig = 1.0 / (1.0 + np.exp(np.minimum(z, 35.0)))
        sig = np.where(z <= -35.0, 1.0, sig)
        return (-sg * sig)[:, None] * Xb

    def subset_loss(self, x, indices) -> float:
        idx = np.asarray(indices, dtype=np.int64)
        z = -self.signs[idx] * (self.X[idx] @ as_vector(x))
        return float(_log1pexp(z).mean())

    def full_loss(self, x) -> float:
        z = -self.signs * (self.X @ as_vector(x))
        return float(_log1pexp(z).mean())

    def full_grad(self, x) -> np.ndarray:
        z = self.signs * (self.X @ as_vector(x))
        sig = 1.0 / (1.0 + np.exp(np.minimum(z, 35.0)))
        sig = np.where(z <= -35.0, 1.0, sig)
        return (self.X * (-self.signs * sig)[:, None]).mean(axis=0)


def logistic_regression_problem(features, labels) -> LogisticRegressionProblem:
    return LogisticRegressionProblem(features, labels)


class MLPProblem(Problem):
    """Dense multi-layer perceptron with softmax cross-entropy.

    Parameters are flattened into a single vector, layer by layer (weights
    row-major, then biases). Initialization is uniform on
    +-1/sqrt(fan_in), drawn deterministically from the given seed. The
    batched per-sample gradient path computes the exact same per-sample
    quantities as the single-sample reverse pass, just stacked.
    """

    def __init__(self, layer_sizes, activation: str, features, labels, seed: int):
        if len(layer_sizes) < 3:
            raise ValueError("need at least one hidden layer: [in, hidden..., out]")
        if any(s <= 0 for s in layer_sizes):
            raise ValueError("layer sizes must be positive")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"activation must be tanh or relu, got {activation!r}")
        X = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        if X.shape[1] != layer_sizes[0]:
            raise ValueError(f"feature width {X.shape[1]} != input layer {layer_sizes[0]}")
        if y.min(initial=0) < 0 or y.max(initial=0) >= layer_sizes[-1]:
            raise ValueError("labels out of range for the output layer")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.activation = activation
        self.X, self.y = X, y
        self.n_samples = X.shape[0]
        self.seed = int(seed)
        self.shapes = [
            (layer_sizes[k + 1], layer_sizes[k]) for k in range(len(layer_sizes) - 1)
        ]
        self.dim = sum(o * i + o for o, i in self.shapes)

    def initial_point(self, rng: RngStream | None = None) -> np.ndarray:
        stream = RngStream(self.seed, stream_id=2**32)
        parts = []
        for out_dim, in_dim in self.shapes:
            bound = 1.0 / math.sqrt(in_dim)
            parts.append((stream.uniforms(out_dim * in_dim) * 2.0 - 1.0) * bound)
            parts.append(np.zeros(out_dim))
        return np.concatenate(parts)

    def _unpack(self, x) -> list[tuple[np.ndarray, np.ndarray]]:
        x = as_vector(x)
        layers, ofs = [], 0
        for out_dim, in_dim in self.shapes:
            W = x[ofs:ofs + out_dim * in_dim].reshape(out_dim, in_dim)
            ofs += out_dim * in_dim
            b = x[ofs:ofs + out_dim]
            ofs += out_dim
            layers.append((W, b))
        return layers

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _act_grad(self, z, a):
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0.0).astype(np.float64)

    def _forward(self, layers, inp):
        # returns pre-activations and activations per layer (batched on axis 0)
        zs, acts = [], [inp]
        h = inp
        for k, (W, b) in enumerate(layers):
            z = h @ W.T + b
            zs.append(z)
            h = self._act(z) if k < len(layers) - 1 else z
            acts.append(h)
        return zs, acts

    @staticmethod
    def _log_softmax(logits):
        m = logits.max(axis=-1, keepdims=True)
        shifted = logits - m
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def per_sample_loss(self, x, i: int) -> float:
        layers = self._unpack(x)
        _, acts = self._forward(layers, self.X[i][None, :])
        return -float(self._log_softmax(acts[-1])[0, self.y[i]])

    def per_sample_grad(self, x, i: int) -> np.ndarray:
        return self.per_sample_grads(x, [i])[0]

    def per_sample_grads(self, x, indices) -> np.ndarray:
        """Batched exact per-sample gradients (outer products per sample)."""
        idx = np.asarray(indices, dtype=np.int64)
        layers = self._unpack(x)
        inp = self.X[idx]
        zs, acts = self._forward(layers, inp)
        logits = acts[-1]
        probs = np.exp(self._log_softmax(logits))
        delta = probs.copy()
        delta[np.arange(len(idx)), self.y[idx]] -= 1.0
        n_layers = len(layers)
        grads = [None] * n_layers
        for k in range(n_layers - 1, -1, -1):
            W, _ = layers[k]
            gW = delta[:, :, None] * acts[k][:, None, :]
            gb = delta
            grads[k] = (gW, gb)
            if k > 0:
                delta = (delta @ W) * self._act_grad(zs[k - 1], acts[k])
        flat = [
            np.concatenate([gW.reshape(len(idx), -1), gb], axis=1) for gW, gb in grads
        ]
        return np.concatenate(flat, axis=1)

    def subset_loss(self, x, indices) -> float:
        idx = np.asarray(indices, dtype=np.int64)
        layers = self._unpack(x)
        _, acts = self._forward(layers, self.X[idx])
        lp = self._log_softmax(acts[-1])
        return -float(lp[np.arange(len(idx)), self.y[idx]].mean())

    def full_loss(self, x) -> float:
        layers = self._unpack(x)
        _, acts = self._forward(layers, self.X)
        lp = self._log_softmax(acts[-1])
        return -float(lp[np.arange(self.n_samples), self.y].mean())

    def full_grad(self, x) -> np.ndarray:
        g = self.per_sample_grads(x, np.arange(self.n_samples))
        return np.cumsum(g, axis=0)[-1] / self.n_samples

    def accuracy(self, x, indices=None) -> float:
        idx = np.arange(self.n_samples) if indices is None else np.asarray(indices)
        layers = self._unpack(x)
        _, acts = self._forward(layers, self.X[idx])
        return float((acts[-1].argmax(axis=1) == self.y[idx]).mean())


def mlp_problem(layer_sizes, activation, features, labels, seed: int) -> MLPProblem:
    return MLPProblem(layer_sizes, activation, features, labels, seed)


NOISE_KINDS = ("constant", "two_level", "ramp", "periodic_burst")
NOISE_DISTS = ("gaussian", "rademacher", "exponential")


@dataclass(frozen=True)
class NoiseSchedule:
    """Time profile of the per-sample gradient noise variance sigma0^2(t).

    kinds:
      constant       sigma0_sq(t) = base
      two_level      alternates low/high in blocks of ``block`` steps
      ramp           linear from base to high over ``period`` steps, then flat
      periodic_burst base, jumping to high for ``block`` steps every ``period``

    dist picks the (mean-zero, variance sigma0^2) per-draw distribution;
    third/fourth moments per unit variance: gaussian (0, 3), rademacher
    (0, 1), exponential (2, 9).
    """

    kind: str = "constant"
    base: float = 1.0
    high: float = 1.0
    block: int = 50
    period: int = 100
    dist: str = "gaussian"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.dist not in NOISE_DISTS:
            raise ValueError(f"dist must be one of {NOISE_DISTS}, got {self.dist!r}")
        if self.base < 0 or self.high < 0:
            raise ValueError("noise variances must be >= 0")
        if self.block < 1 or self.period < 1:
            raise ValueError("block and period must be >= 1")

    def sigma0_sq(self, t: int) -> float:
        """Per-sample noise variance at 1-based step t."""
        if self.kind == "constant":
            return self.base
        if self.kind == "two_level":
            return self.base if ((t - 1) // self.block) % 2 == 0 else self.high
        if self.kind == "ramp":
            frac = min(max(t - 1, 0) / self.period, 1.0)
            return self.base + (self.high - self.base) * frac
        in_burst = ((t - 1) % self.period) < self.block
        return self.high if in_burst else self.base

    def moments(self, t: int) -> tuple[float, float, float]:
        """(variance, third moment, fourth moment) of one noise draw at step t."""
        s2 = self.sigma0_sq(t)
        if self.dist == "gaussian":
            return s2, 0.0, 3.0 * s2 * s2
        if self.dist == "rademacher":
            return s2, 0.0, s2 * s2
        return s2, 2.0 * s2 ** 1.5, 9.0 * s2 * s2

    def draw(self, rng: RngStream, t: int, n: int) -> np.ndarray:
        """n mean-zero draws with variance sigma0_sq(t)."""
        s = math.sqrt(self.sigma0_sq(t))
        if self.dist == "gaussian":
            return s * rng.normals(n)
        if self.dist == "rademacher":
            return s * np.where(rng.uniforms(n) < 0.5, -1.0, 1.0)
        return s * (rng.exponentials(n) - 1.0)


def noise_schedule(kind: str = "constant", **params) -> NoiseSchedule:
    return NoiseSchedule(kind=kind, **params)


class HeteroskedasticStream:
    """Per-sample increment generator with scheduled gradient noise.

    Batch i at step t is the problem's true (full) gradient at x plus m
    independent noise vectors with per-coordinate variance sigma0_sq(t).
    The internal step counter advances once per batch.
    """

    def __init__(self, problem: Problem, schedule: NoiseSchedule, rng: RngStream):
        self.problem = problem
        self.schedule = schedule
        self.rng = rng
        self.t = 0

    def batch(self, x, m: int) -> np.ndarray:
        self.t += 1
        g = self.problem.full_grad(x)
        noise = self.schedule.draw(self.rng, self.t, m * g.shape[0])
        return g[None, :] + noise.reshape(m, g.shape[0])


def heteroskedastic_stream(problem: Problem, schedule: NoiseSchedule,
                           rng: RngStream) -> HeteroskedasticStream:
    return HeteroskedasticStream(problem, schedule, rng)


def finite_difference_grad(loss_fn, x, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function; the gradient oracle."""
    x = as_vector(x).copy()
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        orig = x[j]
        x[j] = orig + h
        up = loss_fn(x)
        x[j] = orig - h
        down = loss_fn(x)
        x[j] = orig
        g[j] = (up - down) / (2.0 * h)
    return g


def gradient_check(problem: Problem, x, indices, h: float = 1e-6) -> float:
    """Max relative error between analytic and finite-difference per-sample grads."""
    worst = 0.0
    for i in indices:
        analytic = problem.per_sample_grad(x, int(i))
        fd = finite_difference_grad(lambda v: problem.per_sample_loss(v, int(i)), x, h)
        scale = max(float(np.linalg.norm(fd)), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - fd)) / scale)
    return worst


def make_blobs(n: int, dim: int, rng: RngStream, separation: float = 2.0,
               n_classes: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class blobs around deterministic centers; labels 0..n_classes-1."""
    centers = np.zeros((n_classes, dim))
    for c in range(n_classes):
        centers[c, c % dim] = separation * (1 if c % 2 == 0 else -1)
        if dim > 1:
            centers[c, (c + 1) % dim] = 0.5 * separation * (1 if c < n_classes / 2 else -1)
    labels = rng.integers(n, n_classes)
    noise = rng.normals(n * dim).reshape(n, dim)
    X = centers[labels] + noise
    return X, labels.astype(np.int64)
