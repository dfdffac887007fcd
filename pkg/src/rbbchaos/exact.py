"""Deterministic computations: small RBB chains, M/D/1 equilibrium, exact
law recursions for the nonlinear process and drift constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse, stats

from .pmf import DEFAULT_TAIL_TOL, Pmf, TruncationError, poisson_tail_bound
from .processes import BinConfiguration

MAX_BINS = 10
MAX_STATES = 10**6
DENSE_LIMIT = 10**4
POWER_ITER_BUDGET = 10**6
ROW_SUM_TOL = 1e-14


class NonConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class StateSpaceTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# RBB chain at small (N, L)


def n_states(N: int, L: int) -> int:
    return math.comb(N + L - 1, L - 1)


@lru_cache(maxsize=64)
def _compositions(N: int, L: int) -> tuple[tuple[int, ...], ...]:
    if L == 1:
        return ((N,),)
    return tuple((first,) + rest for first in range(N + 1) for rest in _compositions(N - first, L - 1))


def enumerate_states(N: int, L: int) -> list[BinConfiguration]:
    """All occupancy vectors of length ``L`` with total ``N``, lexicographically."""
    if N < 0 or L < 1:
        raise ValueError(f"need N >= 0 and L >= 1, got N={N}, L={L}")
    if L > MAX_BINS:
        raise StateSpaceTooLarge(f"L={L} exceeds the exact-engine limit of {MAX_BINS} bins")
    if n_states(N, L) > MAX_STATES:
        raise StateSpaceTooLarge(
            f"C(N+L-1, L-1) = {n_states(N, L)} states exceeds the limit of {MAX_STATES}"
        )
    return [BinConfiguration(np.array(s, dtype=np.int64)) for s in _compositions(N, L)]


def _multinomial(counts: Sequence[int]) -> int:
    out, n = 1, 0
    for c in counts:
        n += c
        out *= math.comb(n, c)
    return out


def _as_tuple(c) -> tuple[int, ...]:
    return c.as_tuple() if isinstance(c, BinConfiguration) else tuple(int(x) for x in c)


def transition_probability(src, dst) -> float:
    """One-step RBB probability ``P(src -> dst)``.

    With ``w`` the indicator of non-empty bins of ``src`` and
    ``sigma = dst - src + w``, the probability is the multinomial
    coefficient ``(K; sigma) / L**K`` where ``K = sum(w)``, and 0 when
    ``sigma`` has a negative entry. Computed exactly in integers and
    rounded once.
    """
    a, b = _as_tuple(src), _as_tuple(dst)
    if len(a) != len(b) or sum(a) != sum(b):
        raise ValueError(f"configurations differ in (N, L): {a} vs {b}")
    L = len(a)
    w = [1 if x > 0 else 0 for x in a]
    K = sum(w)
    sigma = [bj - aj + wj for aj, bj, wj in zip(a, b, w)]
    if min(sigma) < 0:
        return 0.0
    return _multinomial(sigma) / L**K


@dataclass(frozen=True)
class ExactChain:
    """Enumerated RBB chain with a fixed number of balls and bins."""

    N: int
    L: int
    states: list[BinConfiguration]
    matrix: np.ndarray | sparse.csr_matrix
    index: dict[tuple[int, ...], int]

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def prob(self, src, dst) -> float:
        i, j = self.index[_as_tuple(src)], self.index[_as_tuple(dst)]
        return float(self.matrix[i, j])

    def state_array(self) -> np.ndarray:
        return np.array([s.occupancies for s in self.states], dtype=np.int64)

    def left_multiply(self, p: np.ndarray) -> np.ndarray:
        """``p P`` for a row vector ``p``."""
        if self.is_dense:
            return p @ self.matrix
        return self.matrix.T @ p

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def build_chain(N: int, L: int, dense: bool | None = None) -> ExactChain:
    """Enumerate the ``N``-ball, ``L``-bin chain and its transition matrix."""
    states = enumerate_states(N, L)
    index = {s.as_tuple(): i for i, s in enumerate(states)}
    n = len(states)
    if dense is None:
        dense = n <= DENSE_LIMIT
    rows, cols, vals = [], [], []
    denom_cache: dict[int, int] = {}
    for i, s in enumerate(states):
        occ = s.as_tuple()
        base = [x - 1 if x > 0 else 0 for x in occ]
        K = sum(1 for x in occ if x > 0)
        denom = denom_cache.setdefault(K, L**K)
        for sigma in _compositions(K, L):
            j = index[tuple(b + d for b, d in zip(base, sigma))]
            rows.append(i)
            cols.append(j)
            vals.append(_multinomial(sigma) / denom)
    if dense:
        matrix = np.zeros((n, n))
        np.add.at(matrix, (rows, cols), vals)
    else:
        matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    chain = ExactChain(N, L, states, matrix, index)
    err = np.abs(chain.row_sums() - 1.0).max()
    if err > ROW_SUM_TOL:
        raise AssertionError(f"transition matrix rows deviate from 1 by {err:.3e}")
    return chain


def stationary_residual(chain: ExactChain, pi: np.ndarray) -> float:
    """``||pi P - pi||_1``."""
    return float(np.abs(chain.left_multiply(pi) - pi).sum())


def stationary_rbb(chain: ExactChain, tol: float = 1e-12) -> np.ndarray:
    """Stationary distribution of ``chain`` over ``chain.states``.

    Dense chains are solved directly; larger ones by power iteration with
    the stop rule ``||pi P - pi||_1 <= tol``.
    """
    n = chain.size
    if n == 1:
        return np.ones(1)
    if chain.is_dense:
        A = chain.matrix.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        res = stationary_residual(chain, pi)
        if res <= tol:
            return pi
        # polish with a few power steps before giving up
        for _ in range(100):
            pi = chain.left_multiply(pi)
            pi /= pi.sum()
            res = stationary_residual(chain, pi)
            if res <= tol:
                return pi
        raise NonConvergenceError("dense stationary solve missed tolerance", res)
    pi = np.full(n, 1.0 / n)
    res = np.inf
    for _ in range(POWER_ITER_BUDGET):
        nxt = chain.left_multiply(pi)
        nxt /= nxt.sum()
        res = float(np.abs(nxt - pi).sum())
        pi = nxt
        if res <= tol:
            return pi
    raise NonConvergenceError("power iteration exhausted its budget", res)


def evolve_law(chain: ExactChain, initial: np.ndarray, steps: int) -> list[np.ndarray]:
    """Laws of the chain at times 0..steps from the initial law ``initial``."""
    laws = [np.asarray(initial, dtype=float)]
    for _ in range(steps):
        laws.append(chain.left_multiply(laws[-1]))
    return laws


def multinomial_placement_law(chain: ExactChain) -> np.ndarray:
    """Law of the configuration obtained by throwing ``N`` balls uniformly."""
    denom = chain.L**chain.N
    return np.array([_multinomial(s.as_tuple()) / denom for s in chain.states])


def occupancy_moments(chain: ExactChain, law: np.ndarray) -> tuple[float, float]:
    """``(P(eta_1 > 0), P(eta_1 > 0, eta_2 > 0))`` under ``law``."""
    occ = chain.state_array() > 0
    p1 = float(law @ occ[:, 0])
    p12 = float(law @ (occ[:, 0] & occ[:, 1])) if chain.L >= 2 else p1
    return p1, p12


def stationary_covariance_identity(chain: ExactChain, stationary: np.ndarray) -> tuple[float, float]:
    """Both sides of the stationary identity for ``Cov(w_1, w_2)``.

    ``lhs`` is the covariance computed from ``stationary``; ``rhs`` is
    ``-m**2 + 2 m ((r+1)L - 1)/(L-1) - 2 r L/(L-1)`` with ``m = E w_1`` and
    ``r = N / L``.
    """
    L = chain.L
    if L < 2:
        raise ValueError("the covariance identity needs at least two bins")
    occ = chain.state_array() > 0
    m1 = float(stationary @ occ[:, 0])
    m2 = float(stationary @ occ[:, 1])
    lhs = float(stationary @ (occ[:, 0] & occ[:, 1])) - m1 * m2
    r = chain.N / L
    rhs = -(m1**2) + 2 * m1 * ((r + 1) * L - 1) / (L - 1) - 2 * r * L / (L - 1)
    return lhs, rhs


def chebyshev_chaos_bound(L: int, delta: float, pair_prob: float, rho_L: float) -> float:
    """Chebyshev bound on ``P(|w_bar_L - rho_L| > delta)``.

    ``(1/(4L) + P(eta_1 > 0, eta_2 > 0) - rho_L**2) / delta**2``; values
    above 1 are vacuous but returned as is.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if L < 2:
        raise ValueError(f"need L >= 2, got {L}")
    return (1.0 / (4 * L) + pair_prob - rho_L**2) / delta**2


def occupancy_variance_bound(L: int, delta: float, pair_prob: float, rho_L: float) -> float:
    """Chebyshev bound from the exact variance of ``w_bar_L`` under exchangeability.

    ``Var(w_bar) = rho(1 - rho)/L + (1 - 1/L)(P(eta_1 > 0, eta_2 > 0) - rho^2)``.
    Unlike :func:`chebyshev_chaos_bound` this stays valid when bins are
    negatively correlated, as they are in the RBB chain.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    var = rho_L * (1 - rho_L) / L + (1 - 1 / L) * (pair_prob - rho_L**2)
    return max(var, 0.0) / delta**2


# ---------------------------------------------------------------------------
# M/D/1 queue


def rho_of_r(r: float) -> float:
    """Arrival rate whose M/D/1 equilibrium has mean ``r``: ``1 + r - sqrt(1 + r^2)``."""
    if r < 0:
        raise ValueError(f"load must be nonnegative, got {r}")
    # 1 + r - sqrt(1 + r^2) rewritten to avoid cancellation for small r
    return 2 * r / (1 + r + math.sqrt(1 + r * r)) if r > 0 else 0.0


def _check_rate(rho: float) -> None:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"the M/D/1 queue is positive recurrent only for 0 <= rho < 1, got {rho}")


def md1_char_fn(rho: float, x: float) -> complex:
    """Characteristic function of the M/D/1 equilibrium law ``pi_rho`` at ``x``."""
    _check_rate(rho)
    z = complex(math.cos(x), math.sin(x))
    if abs(z - 1) < 1e-12:
        return 1 + 0j
    g = np.exp(rho * (z - 1))
    return complex((1 - rho) * (z - 1) * g / (z - g))


def md1_generating_fn(rho: float, z: float) -> float:
    """``E z**zeta`` under ``pi_rho`` for real ``1 <= z < exp(lambda_star)``."""
    _check_rate(rho)
    if z == 1.0 or rho == 0.0:
        return 1.0
    g = math.exp(rho * (z - 1))
    if z <= g:
        return math.inf
    return (1 - rho) * (z - 1) * g / (z - g)


def md1_tail_bound(rho: float, n: int) -> float:
    """Chernoff bound on ``pi_rho(zeta > n)`` via the generating function."""
    if rho == 0.0:
        return 0.0
    lam_star = min(positive_root(rho), 700.0)  # keep e^lam finite
    best = 1.0
    for lam in np.linspace(0.0, lam_star, 202)[1:-1]:
        z = math.exp(lam)
        best = min(best, md1_generating_fn(rho, z) * math.exp(-lam * (n + 1)))
    return best


def _md1_recursion(rho: float, n_max: int) -> np.ndarray:
    # Level crossing between {0..n} and {n+1, ...}: downward moves are single
    # steps, so pi[n+1] a_0 = pi[0] P(A >= n+1) + sum_{k=1}^n pi[k] P(A >= n-k+2).
    # Same balance equations as the forward recursion, without subtractions.
    pi = np.zeros(n_max + 1)
    pi[0] = 1.0 - rho
    a0 = math.exp(-rho)
    at_least = stats.poisson.sf(np.arange(-1, n_max + 2), rho)  # at_least[j] = P(A >= j)
    for n in range(n_max):
        s = pi[0] * at_least[n + 1]
        if n >= 1:
            # k = 1..n pairs with j = n-k+2 = n+1..2
            s += float(np.dot(pi[1 : n + 1], at_least[n + 1 : 1 : -1]))
        pi[n + 1] = s / a0
    return pi


def md1_stationary_pmf(rho: float, n_max: int | None = None,
                       tol: float = DEFAULT_TAIL_TOL) -> Pmf:
    """Equilibrium law of the M/D/1 queue from its balance equations.

    When ``n_max`` is omitted it is doubled from 16 until the certified tail
    bound drops below ``tol``.
    """
    _check_rate(rho)
    if rho == 0.0:
        w = np.zeros((n_max or 0) + 1)
        w[0] = 1.0
        return Pmf(w)
    if n_max is None:
        n_max = 16
        while md1_tail_bound(rho, n_max) > tol:
            n_max *= 2
            if n_max > 1 << 16:
                raise TruncationError(f"no truncation below 65536 certifies tail {tol} at rho={rho}",
                                      md1_tail_bound(rho, n_max))
    tail = md1_tail_bound(rho, n_max)
    if tail > tol:
        raise TruncationError(
            f"tail bound {tail:.3e} at n_max={n_max} exceeds tolerance {tol:.1e} for rho={rho}", tail
        )
    w = _md1_recursion(rho, n_max)
    # the recursion carries rounding of order 1e-16 per term; keep the sum <= 1
    total = w.sum()
    if total > 1.0:
        w = w / total
    return Pmf(w, tail_bound=tail)


def md1_balance_residual(pmf: Pmf, rho: float) -> float:
    """``||pi P - pi||_1`` restricted to the truncation window."""
    w = pmf.weights
    return float(np.abs(queue_step_law(w, rho)[: w.size] - w).sum())


# ---------------------------------------------------------------------------
# exact law recursions

# per-step truncation budget for Poisson kernels and trailing masses
_STEP_BUDGET = 1e-17


def _poisson_kernel(rate: float) -> tuple[np.ndarray, float]:
    if rate <= 0:
        return np.array([1.0]), 0.0
    n = max(1, int(math.ceil(rate)))
    while poisson_tail_bound(rate, n) > _STEP_BUDGET:
        n += 1
    return stats.poisson.pmf(np.arange(n + 1), rate), poisson_tail_bound(rate, n)


def serve(w: np.ndarray) -> np.ndarray:
    """Law of ``x - 1(x > 0)`` given the law ``w`` of ``x``."""
    out = np.empty(max(w.size - 1, 1))
    out[0] = w[0] + (w[1] if w.size > 1 else 0.0)
    out[1:] = w[2:]
    return out


def queue_step_law(w: np.ndarray, rate: float) -> np.ndarray:
    """Untruncated one-step law (Poisson kernel cut at its own budget)."""
    kernel, _ = _poisson_kernel(rate)
    return np.convolve(serve(w), kernel)


def _trim(w: np.ndarray, budget: float) -> tuple[np.ndarray, float]:
    tail = np.cumsum(w[::-1])
    drop = int(np.searchsorted(tail, budget, side="right"))
    drop = min(drop, w.size - 1)
    return (w[: w.size - drop], float(tail[drop - 1]) if drop else 0.0)


def queue_pmf_evolve(initial: Pmf, steps: int, rate: float | None = None,
                     tol: float = DEFAULT_TAIL_TOL) -> list[Pmf]:
    """Exact laws at times 0..steps of a unit-service queue.

    With ``rate=None`` the arrival rate at time t is ``P(eta(t) > 0)``, the
    nonlinear process; otherwise it is the fixed M/D/1 rate.
    """
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    if rate is not None and rate < 0:
        raise ValueError("arrival rate must be nonnegative")
    laws = [initial]
    w = np.asarray(initial.weights, dtype=float)
    tail = initial.tail_bound
    for _ in range(steps):
        lam = float(1.0 - w[0]) if rate is None else rate
        kernel, k_tail = _poisson_kernel(max(lam, 0.0))
        w = np.convolve(serve(w), kernel)
        w, dropped = _trim(w, _STEP_BUDGET)
        tail += k_tail + dropped
        if tail - initial.tail_bound > tol:
            raise TruncationError(f"truncation added tail mass {tail:.3e} beyond {tol:.1e}", tail)
        w = np.clip(w, 0.0, None)
        total = w.sum()
        if total > 1.0:
            w = w / total
        laws.append(Pmf(w, tail_bound=tail))
    return laws


def nonlinear_pmf_evolve(initial: Pmf, steps: int, tol: float = DEFAULT_TAIL_TOL) -> list[Pmf]:
    """Laws of the nonlinear process at times 0..steps.

    Each step serves one customer (mass at k > 0 moves to k - 1) and then
    convolves with ``Poisson(rho(t))``, ``rho(t) = 1 - law_t(0)``.
    """
    return queue_pmf_evolve(initial, steps, rate=None, tol=tol)


def positive_rates(laws: Sequence[Pmf]) -> np.ndarray:
    """``rho(t) = P(eta(t) > 0)`` along a sequence of laws."""
    return np.array([law.prob_positive() for law in laws])


# ---------------------------------------------------------------------------
# exponential-moment drift


def positive_root(rho: float, xtol: float = 1e-12) -> float:
    """Unique positive root of ``rho (e^lam - 1) = lam`` for ``0 < rho < 1``, by bisection."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")

    log_rho = math.log(rho)

    def f(lam):
        # sign of rho (e^lam - 1) - lam, in logs so tiny rho cannot overflow
        return log_rho + lam + math.log(-math.expm1(-lam)) - math.log(lam)

    lo, hi = 0.0, 1.0
    while f(hi) <= 0:
        lo, hi = hi, 2 * hi
    # f < 0 on (0, root), f > 0 beyond
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DriftConstants:
    """Constants of the geometric drift ``Pf - f <= -gamma f + C`` for ``f = e^{lambda zeta}``."""

    rho: float
    lambda_rho: float
    lambda_star: float
    gamma: float
    C: float

    def pf(self, zeta, lam: float | None = None):
        """``E_zeta exp(lam zeta(1))`` in closed form."""
        lam = self.lambda_rho if lam is None else lam
        zeta = np.asarray(zeta)
        return np.exp(lam * (zeta - (zeta > 0)) + self.rho * np.expm1(lam))

    def f(self, zeta, lam: float | None = None):
        lam = self.lambda_rho if lam is None else lam
        return np.exp(lam * np.asarray(zeta))

    def drift_slack(self, zeta) -> np.ndarray:
        """``-gamma f + C - (Pf - f)``; nonnegative where the drift inequality holds."""
        f = self.f(zeta)
        return -self.gamma * f + self.C - (self.pf(zeta) - f)

    def envelope(self, t, zeta0: int) -> np.ndarray:
        """``(1 - gamma)^t e^{lambda zeta0} + C / gamma``."""
        t = np.asarray(t)
        return (1 - self.gamma) ** t * math.exp(self.lambda_rho * zeta0) + self.C / self.gamma

    @property
    def moment_constant(self) -> float:
        """A constant ``K`` with ``E_zeta exp(lambda zeta(t)) <= K e^{lambda zeta}`` for all t.

        The envelope is at most ``(1 + C / gamma) f(zeta)`` because ``f >= 1``.
        ``C`` alone does not work: from ``zeta = 0`` the moment tends to the
        stationary value, which exceeds ``C``.
        """
        return 1.0 + self.C / self.gamma


def drift_constants(rho: float) -> DriftConstants:
    """Drift constants with ``lambda_rho`` half the positive root."""
    lam_star = positive_root(rho)
    lam = lam_star / 2
    exponent = rho * math.expm1(lam)
    if not exponent < lam:
        raise AssertionError("lambda_rho violates rho(e^lambda - 1) < lambda")
    gamma = -math.expm1(exponent - lam)
    C = math.exp(exponent)
    return DriftConstants(rho=rho, lambda_rho=lam, lambda_star=lam_star, gamma=gamma, C=C)
