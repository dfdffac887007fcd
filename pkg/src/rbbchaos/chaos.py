"""Empirical propagation of chaos: factorisation gaps, path functionals and
the Chebyshev concentration bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import exact
from .ensemble import (Initializer, as_initializer, balls_for_load, map_replicas,
                       run_ensemble_rbb, run_replica)
from .pmf import Pmf, tv_distance
from .rng import RandomStream

ESTIMATORS = ("exchangeable", "bins12")
MAX_ARITY = 4


def _batch_stderr(values: np.ndarray, batches: int = 100) -> float:
    """Standard error of the mean of ``values`` by batch means."""
    n = values.size
    if n < 2:
        return math.inf
    b = min(batches, n)
    means = np.array([chunk.mean() for chunk in np.array_split(values, b)])
    sizes = np.array([chunk.size for chunk in np.array_split(values, b)])
    grand = float(np.dot(means, sizes) / n)
    # size-weighted between-batch variance of the mean
    var = float(np.dot(sizes**2, (means - grand) ** 2)) / (n * n) * b / (b - 1)
    return math.sqrt(var)


@dataclass(frozen=True)
class GapEstimate:
    pair_prob: float
    rho_hat: float
    gap: float
    stderr: float


def chaos_gap(occupied: np.ndarray, bins12: np.ndarray, L: int,
              estimator: str = "exchangeable") -> GapEstimate:
    """Estimate ``|P(eta_1 > 0, eta_2 > 0) - P(eta_1 > 0)^2|`` from replicas at one time.

    ``exchangeable`` averages over all ordered pairs of distinct bins, which
    under exchangeability is unbiased for the two-bin probability:
    ``K (K - 1) / (L (L - 1))`` with ``K`` the number of non-empty bins, and
    ``K / L`` for the one-bin probability. ``bins12`` uses bins 1 and 2 only.
    The standard error linearises ``pair - rho**2`` around the estimates.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    if L < 2:
        raise ValueError("the chaos gap needs at least two bins")
    if estimator == "exchangeable":
        K = occupied.astype(float)
        a = K * (K - 1) / (L * (L - 1))
        b = K / L
    else:
        w = bins12 > 0
        a = (w[:, 0] & w[:, 1]).astype(float)
        b = w.mean(axis=1)
    pair, rho = float(a.mean()), float(b.mean())
    influence = a - 2 * rho * b
    return GapEstimate(pair, rho, abs(pair - rho * rho), _batch_stderr(influence))


@dataclass
class ChaosReport:
    L_values: list[int]
    gap: list[float]
    stderr: list[float]
    bound: list[float]
    pair_prob: list[float]
    rho_hat: list[float]
    replicas: list[int]
    marginal_tv: list[float]
    r: float
    T: int
    delta: float
    estimator: str

    def rows(self) -> list[dict]:
        return [
            dict(L=L, gap=g, stderr=s, bound=b, pair_prob=p, rho_hat=rh, replicas=R, marginal_tv=tv)
            for L, g, s, b, p, rh, R, tv in zip(self.L_values, self.gap, self.stderr, self.bound,
                                                 self.pair_prob, self.rho_hat, self.replicas,
                                                 self.marginal_tv)
        ]

    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.gap, self.gap[1:]))

    def end_to_end_drop(self) -> tuple[float, float]:
        """``(gap[0] - gap[-1], combined stderr)``."""
        return (self.gap[0] - self.gap[-1], math.hypot(self.stderr[0], self.stderr[-1]))


def nonlinear_laws_from(init: Initializer, L: int, N: int, T: int) -> list[Pmf]:
    """Exact laws of the nonlinear process started from one bin's time-0 law."""
    return exact.nonlinear_pmf_evolve(init.marginal(L, N), T)


def chaos_sweep(
    L_values: Sequence[int],
    r: float,
    T: int,
    replicas: int | Mapping[int, int],
    rng: RandomStream,
    delta: float = 0.1,
    initializer: Initializer | str | dict = "multinomial",
    estimator: str = "exchangeable",
    threads: int = 1,
) -> ChaosReport:
    """Estimate the chaos gap at time ``T`` for each ``L`` with ``N = round(r L)``.

    Each ``L`` gets its own replica streams (``rng.child(L)``). The report
    also carries the Chebyshev bound at ``delta`` from the estimated pair
    probability and the TV distance between the pooled single-bin law at
    ``T`` and the exact nonlinear law.
    """
    init = as_initializer(initializer)
    rep = dict.fromkeys(L_values, replicas) if isinstance(replicas, int) else dict(replicas)
    report = ChaosReport([], [], [], [], [], [], [], [], r, T, delta, estimator)
    for L in L_values:
        N = balls_for_load(r, L)
        res = run_ensemble_rbb(L, N, init, T, rep[L], rng.child(L), threads=threads)
        est = chaos_gap(res.occupied[:, T], res.track[:, T, :2], L, estimator)
        laws = nonlinear_laws_from(init, L, N, T)
        report.L_values.append(L)
        report.gap.append(est.gap)
        report.stderr.append(est.stderr)
        report.bound.append(exact.chebyshev_chaos_bound(L, delta, est.pair_prob, est.rho_hat))
        report.pair_prob.append(est.pair_prob)
        report.rho_hat.append(est.rho_hat)
        report.replicas.append(rep[L])
        report.marginal_tv.append(tv_distance(res.pooled_marginal(), laws[T]))
    return report


# ---------------------------------------------------------------------------
# path functionals


@dataclass(frozen=True)
class PathFunctional:
    """Bounded functional ``prod_s g_s(eta(s))`` of one coordinate's path.

    ``factors`` maps a time to a vectorised function of the state at that
    time; times not listed contribute the factor 1.
    """

    factors: Mapping[int, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict)
    bound: float = 1.0
    label: str = "1"

    @classmethod
    def constant(cls) -> "PathFunctional":
        return cls({}, 1.0, "1")

    @classmethod
    def cylinder(cls, values: Mapping[int, int]) -> "PathFunctional":
        """Indicator ``1(eta(t_1) = a_1, ..., eta(t_m) = a_m)``."""
        factors = {int(t): (lambda x, a=int(a): (x == a).astype(float)) for t, a in values.items()}
        label = "1(" + ", ".join(f"eta({t})={a}" for t, a in sorted(values.items())) + ")"
        return cls(factors, 1.0, label)

    @classmethod
    def empty_at(cls, t: int) -> "PathFunctional":
        return cls.cylinder({t: 0})

    @classmethod
    def positive_at(cls, t: int) -> "PathFunctional":
        return cls({int(t): lambda x: (x > 0).astype(float)}, 1.0, f"1(eta({t})>0)")

    @classmethod
    def capped(cls, t: int, cap: int) -> "PathFunctional":
        """``min(eta(t), cap)``."""
        return cls({int(t): lambda x, c=cap: np.minimum(x, c).astype(float)}, float(cap),
                   f"min(eta({t}),{cap})")

    @property
    def window(self) -> int:
        return max(self.factors, default=0)

    def evaluate(self, paths: np.ndarray) -> np.ndarray:
        """Values on paths ``paths[..., t]``."""
        out = np.ones(paths.shape[:-1])
        for t, g in self.factors.items():
            out = out * g(paths[..., t])
        if np.any(np.abs(out) > self.bound + 1e-12):
            raise ValueError(f"functional {self.label} exceeded its declared bound {self.bound}")
        return out

    def expectation(self, laws: Sequence[Pmf]) -> float:
        """Exact expectation under the nonlinear process with marginal laws ``laws``.

        Given the laws, the process is a time-inhomogeneous Markov chain with
        kernel "serve one, add Poisson(rho(t))"; the expectation is a forward
        pass of the weighted sub-probability vector.
        """
        T = self.window
        if T >= len(laws):
            raise ValueError(f"functional window {T} exceeds the {len(laws) - 1} available steps")
        v = np.asarray(laws[0].weights, dtype=float)
        for s in range(T + 1):
            if s in self.factors:
                v = v * self.factors[s](np.arange(v.size))
            if s < T:
                v = exact.queue_step_law(v, laws[s].prob_positive())
        return float(v.sum())


@dataclass(frozen=True)
class FunctionalTest:
    empirical_product: float
    product_of_nonlinear: float
    stderr: float

    def __iter__(self):
        return iter((self.empirical_product, self.product_of_nonlinear, self.stderr))


def path_functional_test(
    L: int,
    r: float,
    functionals: Sequence[PathFunctional],
    T: int,
    replicas: int,
    rng: RandomStream,
    initializer: Initializer | str | dict = "multinomial",
    threads: int = 1,
) -> FunctionalTest:
    """Compare ``E prod_k Phi_k(eta_k^L)`` with ``prod_k E Phi_k(eta)``.

    The left side is estimated over disjoint groups of ``n`` coordinates in
    every replica (exchangeability makes each group a sample); the right
    side is exact.
    """
    n = len(functionals)
    if not 1 <= n <= MAX_ARITY:
        raise ValueError(f"supported arity is 1..{MAX_ARITY}, got {n}")
    if any(f.window > T for f in functionals):
        raise ValueError("a functional looks beyond the horizon T")
    init = as_initializer(initializer)
    N = balls_for_load(r, L)
    groups = L // n
    if groups < 1:
        raise ValueError(f"L={L} is too small for {n} coordinates")

    def one(i, stream):
        run = run_replica(L, N, init, T, stream, track=groups * n)
        # paths[g, k, t]: coordinate g*n + k
        paths = run.track.T.reshape(groups, n, T + 1)
        prod = np.ones(groups)
        for k, f in enumerate(functionals):
            prod *= f.evaluate(paths[:, k, :])
        return prod.mean()

    per_replica = np.array(map_replicas(one, replicas, rng, threads))
    laws = nonlinear_laws_from(init, L, N, T)
    rhs = float(np.prod([f.expectation(laws) for f in functionals]))
    return FunctionalTest(float(per_replica.mean()), rhs, _batch_stderr(per_replica))


# ---------------------------------------------------------------------------
# Chebyshev concentration


@dataclass(frozen=True)
class ChebyshevCheck:
    L: int
    delta: float
    exceed_prob: float
    stderr: float
    bound: float
    rho_L: float
    pair_prob: float
    exact: bool
    variance_bound: float

    @property
    def holds(self) -> bool:
        return self.exceed_prob <= self.bound + 3 * self.stderr


def chebyshev_check(
    L: int,
    r: float,
    T: int,
    deltas: Sequence[float],
    replicas: int,
    rng: RandomStream,
    use_exact: bool | None = None,
    initializer: Initializer | str | dict = "multinomial",
    threads: int = 1,
) -> list[ChebyshevCheck]:
    """Empirical ``P(|w_bar_L(T) - rho^L(T)| > delta)`` against the Chebyshev bound.

    With ``use_exact`` (default for chains the exact engine can enumerate
    cheaply) ``rho^L(T)`` and the pair probability come from the exact law
    of the chain started from the multinomial placement; otherwise both are
    estimated from the same replicas.
    """
    init = as_initializer(initializer)
    N = balls_for_load(r, L)
    if use_exact is None:
        use_exact = L <= 6 and exact.n_states(N, L) <= 5000
    res = run_ensemble_rbb(L, N, init, T, replicas, rng, threads=threads)
    w_bar = res.occupied[:, T] / L
    if use_exact:
        if init.kind != "multinomial":
            raise ValueError("exact pair probabilities are available for the multinomial start only")
        chain = exact.build_chain(N, L)
        law = exact.evolve_law(chain, exact.multinomial_placement_law(chain), T)[-1]
        rho_L, pair = exact.occupancy_moments(chain, law)
    else:
        est = chaos_gap(res.occupied[:, T], res.track[:, T, :2], L)
        rho_L, pair = est.rho_hat, est.pair_prob
    out = []
    for delta in deltas:
        hits = (np.abs(w_bar - rho_L) > delta).astype(float)
        p = float(hits.mean())
        se = math.sqrt(max(p * (1 - p), 1.0 / replicas) / replicas)
        out.append(ChebyshevCheck(
            L, delta, p, se, exact.chebyshev_chaos_bound(L, delta, pair, rho_L),
            rho_L, pair, bool(use_exact), exact.occupancy_variance_bound(L, delta, pair, rho_L),
        ))
    return out
