"""Dense float64 vector primitives and reproducible random streams.

Everything downstream operates on flat float64 arrays ("parameter vectors").
Two contracts matter more than speed here:

* Reductions use a pinned left-to-right accumulation order, so a value
  computed twice from the same data is bit-identical. Parallel maps over
  elements are fine; parallel reductions are not offered.
* Random streams are counter-based: draw k of stream (seed, stream_id) is a
  pure function of (seed, stream_id, k), so sequences are reproducible and
  streams are splittable without shared state. Integer mixing and the
  uniform conversion are bit-portable; the normal transform goes through
  libm log/cos and is stable per platform.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

EPS_DIV = 1e-12

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_U53 = 2.0 ** -53


class ShapeMismatchError(ValueError):
    """Binary op on vectors of different lengths."""

    def __init__(self, len_a: int, len_b: int):
        super().__init__(f"vector length mismatch: {len_a} vs {len_b}")
        self.len_a = len_a
        self.len_b = len_b


class EmptyVectorError(ValueError):
    """Reduction over an empty vector."""


class NonFiniteError(FloatingPointError):
    """A non-finite value appeared where finite data is required."""

    def __init__(self, what: str, index: int):
        super().__init__(f"non-finite value in {what} at coordinate {index}")
        self.index = index


def param_vector(values) -> np.ndarray:
    """Build a read-only float64 vector (the common currency of this package)."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


def as_vector(a) -> np.ndarray:
    """View input as a 1-D float64 array without copying when possible."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def first_nonfinite(a) -> int | None:
    """Index of the first NaN/Inf entry, or None if all entries are finite."""
    a = np.asarray(a)
    bad = ~np.isfinite(a)
    if bad.any():
        return int(np.argmax(bad))
    return None


def assert_finite(a, what: str) -> None:
    idx = first_nonfinite(a)
    if idx is not None:
        raise NonFiniteError(what, idx)


_BINARY = {"add", "sub", "mul", "div"}
_UNARY = {"square", "sqrt"}


def elementwise(op: str, a, b=None) -> np.ndarray:
    """Elementwise arithmetic with pinned semantics.

    ``div`` clamps denominators with magnitude below ``EPS_DIV`` to
    sign(d) * EPS_DIV (sign of 0 treated as +), because downstream ratios
    divide by squared mean increments that can vanish. ``scale`` takes a
    scalar second operand.
    """
    a = as_vector(a)
    if op in _BINARY:
        b = as_vector(b)
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatchError(a.shape[0], b.shape[0])
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        return np.asarray(_kernels.guarded_divide(a, b, EPS_DIV))
    if op == "scale":
        return a * float(b)
    if op in _UNARY:
        if b is not None:
            raise ValueError(f"{op} takes a single operand")
        return a * a if op == "square" else np.sqrt(a)
    raise ValueError(f"unknown elementwise op: {op!r}")


def reduce(op: str, a) -> float:
    """Ordered reductions: sum, mean, max, l2norm. Empty input is an error."""
    a = as_vector(a)
    if a.shape[0] == 0:
        raise EmptyVectorError(f"cannot reduce('{op}') over an empty vector")
    if op == "sum":
        return float(_kernels.ordered_sum(a))
    if op == "mean":
        return float(_kernels.ordered_sum(a)) / a.shape[0]
    if op == "max":
        return float(np.max(a))
    if op == "l2norm":
        return float(np.sqrt(_kernels.ordered_sum(a * a)))
    raise ValueError(f"unknown reduce op: {op!r}")


def _mix64(z: np.ndarray) -> np.ndarray:
    # Stafford variant-13 finalizer; uint64 arithmetic wraps mod 2**64.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """Counter-based random stream addressed by (seed, stream_id).

    Output word k is ``mix64(key + k * gamma)`` where key and gamma are
    derived from (seed, stream_id); gamma is forced odd so the counter walk
    covers the full 2**64 ring. A uniform draw consumes one word, a normal
    draw two (paired transform, fixed advance per draw), so bulk and scalar
    draws see the same sequence.
    """

    __slots__ = ("seed", "stream_id", "_key", "_gamma", "_counter")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._key = _mix64_int(self.seed ^ _mix64_int((self.stream_id + 1) * _GOLDEN))
        self._gamma = (_mix64_int(self.stream_id + _GOLDEN) | 1) & _MASK64
        self._counter = 0

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh stream with the same seed and a different stream_id."""
        return RngStream(self.seed, stream_id)

    @property
    def counter(self) -> int:
        return self._counter

    def _words(self, n: int) -> np.ndarray:
        counters = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        self._counter += n
        z = np.uint64(self._key) + counters * np.uint64(self._gamma)
        return _mix64(z)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in [0, 1), one counter word each."""
        return (self._words(n) >> np.uint64(11)).astype(np.float64) * _U53

    def _open_uniforms(self, n: int) -> np.ndarray:
        # (0, 1] so log() is safe
        return ((self._words(n) >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53

    def normals(self, n: int) -> np.ndarray:
        """n standard normals; two counter words per draw (polar pair, cosine branch)."""
        w = self._words(2 * n)
        u1 = ((w[0::2] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _U53
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * _U53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def exponentials(self, n: int) -> np.ndarray:
        """n unit exponentials, one counter word each."""
        return -np.log(self._open_uniforms(n))

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n indices uniform on [0, bound); one counter word each."""
        if bound < 1:
            raise ValueError(f"bound must be >= 1, got {bound}")
        return np.floor(self.uniforms(n) * bound).astype(np.int64)

    def uniform01(self) -> float:
        return float(self.uniforms(1)[0])

    def standard_normal(self) -> float:
        return float(self.normals(1)[0])

    def index_uniform(self, bound: int) -> int:
        return int(self.integers(1, bound)[0])

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n); consumes n-1 counter words."""
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.index_uniform(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def rng_next(stream: RngStream, dist: str, bound: int | None = None):
    """Single draw from a stream: 'uniform01', 'standard_normal', or 'index_uniform'."""
    if dist == "uniform01":
        return stream.uniform01()
    if dist == "standard_normal":
        return stream.standard_normal()
    if dist == "index_uniform":
        if bound is None:
            raise ValueError("index_uniform requires a bound")
        return stream.index_uniform(bound)
    raise ValueError(f"unknown distribution: {dist!r}")
