"""Truncated probability mass functions on the nonnegative integers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

DEFAULT_TAIL_TOL = 1e-12
# slack for floating-point summation when checking normalisation
_SUM_SLACK = 1e-12


class TruncationError(RuntimeError):
    """A pmf could not be represented within the tail tolerance.

    ``residual`` is the tail mass (or bound) that broke the budget, when known.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Pmf:
    """Masses ``weights[k] = P(X = k)`` for ``k <= n_max``.

    ``tail_bound`` is a certified upper bound on ``P(X > n_max)``.
    """

    weights: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")
        total = w.sum()
        if total > 1 + _SUM_SLACK or total < 1 - self.tail_bound - _SUM_SLACK:
            raise ValueError(
                f"weights sum to {total!r}, outside [1 - tail_bound, 1] "
                f"with tail_bound={self.tail_bound!r}"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_max(self) -> int:
        return self.weights.size - 1

    def __len__(self) -> int:
        return self.weights.size

    def __getitem__(self, k: int) -> float:
        return float(self.weights[k]) if 0 <= k < self.weights.size else 0.0

    def mean(self) -> float:
        return float(np.dot(np.arange(self.weights.size), self.weights))

    def prob_positive(self) -> float:
        """``P(X > 0)``, counting the truncated tail as positive mass."""
        return float(1.0 - self.weights[0])

    def expect(self, f) -> float:
        return float(np.dot(f(np.arange(self.weights.size)), self.weights))

    def padded(self, size: int) -> np.ndarray:
        out = np.zeros(max(size, self.weights.size))
        out[: self.weights.size] = self.weights
        return out

    def char_fn(self, x: float) -> complex:
        k = np.arange(self.weights.size)
        return complex(np.dot(self.weights, np.exp(1j * x * k)))

    @classmethod
    def delta(cls, k: int) -> "Pmf":
        w = np.zeros(k + 1)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def from_masses(cls, masses) -> "Pmf":
        """Exact finite pmf; renormalises away rounding in the input."""
        w = np.asarray(masses, dtype=float)
        return cls(w / w.sum())

    @classmethod
    def poisson(cls, mean: float, tol: float = DEFAULT_TAIL_TOL) -> "Pmf":
        n = poisson_cutoff(mean, tol)
        return cls(stats.poisson.pmf(np.arange(n + 1), mean) if mean > 0 else np.array([1.0]),
                   tail_bound=poisson_tail_bound(mean, n))

    @classmethod
    def binomial(cls, n: int, p: float) -> "Pmf":
        return cls(stats.binom.pmf(np.arange(n + 1), n, p))


def poisson_tail_bound(mean: float, n: int) -> float:
    """Chernoff bound on ``P(Poisson(mean) > n)``."""
    if mean <= 0:
        return 0.0
    m = n + 1
    if m <= mean:
        return 1.0
    return min(1.0, math.exp(-mean + m * (1.0 + math.log(mean / m))))


def poisson_cutoff(mean: float, tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest ``n`` whose Chernoff tail bound is at most ``tol``."""
    if mean <= 0:
        return 0
    n = max(1, int(math.ceil(mean)))
    while poisson_tail_bound(mean, n) > tol:
        n += 1
    return n


def poisson_weights(mean: float, tol: float = DEFAULT_TAIL_TOL) -> tuple[np.ndarray, float]:
    """Truncated Poisson masses and the certified bound on the dropped tail."""
    if mean <= 0:
        return np.array([1.0]), 0.0
    n = poisson_cutoff(mean, tol)
    return stats.poisson.pmf(np.arange(n + 1), mean), poisson_tail_bound(mean, n)


def tv_distance(p: Pmf, q: Pmf) -> float:
    """Total-variation distance, an upper bound when either pmf is truncated.

    The aligned part contributes ``sum |p_k - q_k| / 2``; unknown tail mass
    beyond the truncation points adds at most half the sum of tail bounds.
    """
    size = max(len(p), len(q))
    body = 0.5 * float(np.abs(p.padded(size) - q.padded(size)).sum())
    return min(1.0, body + 0.5 * (p.tail_bound + q.tail_bound))
