"""Equilibrium checks for the nonlinear process and the M/D/1 queue."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exact
from .ensemble import map_replicas
from .kernels import impl as _k
from .pmf import Pmf, tv_distance
from .processes import md1_trajectory
from .rng import RandomStream

MEAN_TOL = 1e-10


def convergence_to_equilibrium(r: float, initial: Pmf, T: int) -> list[tuple[int, float]]:
    """``(t, TV(law(eta(t)), pi_{rho_r}))`` for t = 0..T along the exact recursion."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"convergence is established for loads in [0, 1), got r={r}")
    if abs(initial.mean() - r) > MEAN_TOL:
        raise ValueError(f"initial mean {initial.mean()!r} differs from r={r}")
    target = exact.md1_stationary_pmf(exact.rho_of_r(r))
    laws = exact.nonlinear_pmf_evolve(initial, T)
    return [(t, tv_distance(law, target)) for t, law in enumerate(laws)]


@dataclass(frozen=True)
class MomentRow:
    t: int
    moment: float
    bound: float
    envelope: float

    @property
    def within_bound(self) -> bool:
        return self.moment <= self.bound

    @property
    def within_envelope(self) -> bool:
        return self.moment <= self.envelope

    @property
    def holds(self) -> bool:
        return self.within_bound and self.within_envelope


def exponential_moment_check(rho: float, zeta0: int, T: int) -> list[MomentRow]:
    """Exact ``E exp(lambda zeta(t))`` for the M/D/1 queue from ``zeta0``.

    Conditioning on ``zeta(t)`` gives
    ``m(t+1) = e^{rho(e^lambda - 1)} (e^{-lambda} m(t) + (1 - e^{-lambda}) P(zeta(t) = 0))``,
    so only the exact probability of an empty queue is needed; it comes
    from the pmf recursion. ``bound`` is ``C e^{lambda zeta0}``; ``envelope``
    is the iterated drift ``(1 - gamma)^t e^{lambda zeta0} + C / gamma``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if zeta0 < 0:
        raise ValueError("zeta0 must be nonnegative")
    dc = exact.drift_constants(rho)
    lam = dc.lambda_rho
    laws = exact.queue_pmf_evolve(Pmf.delta(zeta0), T, rate=rho)
    grow = math.exp(rho * math.expm1(lam))
    shrink = math.exp(-lam)
    m = math.exp(lam * zeta0)
    rows = []
    for t in range(T + 1):
        rows.append(MomentRow(t, m, dc.C * math.exp(lam * zeta0), float(dc.envelope(t, zeta0))))
        m = grow * (shrink * m + (1 - shrink) * laws[t][0])
    return rows


def truncated_moment(law: Pmf, lam: float) -> float:
    """``sum_k law(k) e^{lambda k}`` over the stored window (a lower bound)."""
    return law.expect(lambda k: np.exp(lam * k))


@dataclass
class RegimeSummary:
    rho: float
    T: int
    replicas: int
    zeta0: int
    mean_final: float
    stderr_final: float
    drift_prediction: float
    frac_zero: float
    frac_zero_stderr: float
    pi0: float | None
    verdict: str
    excursions: dict = field(default_factory=dict)


def regime_demo(rho: float, T: int, replicas: int, rng: RandomStream, zeta0: int = 0,
                threads: int = 1) -> RegimeSummary:
    """Qualitative behaviour of the M/D/1 queue at arrival rate ``rho``.

    Reports the mean terminal state (compare ``zeta0 + (rho - 1) T`` when
    ``rho > 1``) and the fraction of steps 1..T spent at 0 (compare
    ``1 - rho`` when ``rho < 1``). At ``rho = 1`` no verdict is possible
    from finite runs; excursion statistics are reported instead.
    """
    if rho < 0:
        raise ValueError("arrival rate must be nonnegative")
    if replicas < 1 or T < 1:
        raise ValueError("need at least one replica and one step")

    def one(i, stream):
        path = md1_trajectory(zeta0, rho, T, stream)
        at_zero = path[1:] == 0
        # excursion lengths: runs of positive states between visits to 0
        zeros = np.flatnonzero(path == 0)
        returns = np.diff(zeros) if zeros.size > 1 else np.empty(0, np.int64)
        return path[-1], at_zero.mean(), at_zero, int(path.max()), returns

    runs = map_replicas(one, replicas, rng, threads)
    finals = np.array([x[0] for x in runs], dtype=float)
    fracs = np.array([x[1] for x in runs])
    if replicas > 1:
        se_final = float(finals.std(ddof=1) / math.sqrt(replicas))
        se_frac = float(fracs.std(ddof=1) / math.sqrt(replicas))
    else:
        se_final = math.inf
        # batch means along the single trajectory
        batches = np.array_split(runs[0][2].astype(float), 20)
        bm = np.array([b.mean() for b in batches])
        se_frac = float(bm.std(ddof=1) / math.sqrt(bm.size))
    if rho > 1:
        verdict = "transient: linear growth"
    elif rho < 1:
        verdict = "positive recurrent: ergodic"
    else:
        verdict = "inconclusive by design"
    returns = np.concatenate([x[4] for x in runs]) if runs else np.empty(0)
    excursions = {
        "max_state": int(max(x[3] for x in runs)),
        "returns_observed": int(returns.size),
        "mean_return_time": float(returns.mean()) if returns.size else math.nan,
        "return_time_histogram": np.bincount(np.minimum(returns, 100)).tolist() if returns.size else [],
    }
    return RegimeSummary(
        rho=rho, T=T, replicas=replicas, zeta0=zeta0,
        mean_final=float(finals.mean()), stderr_final=se_final,
        drift_prediction=zeta0 + (rho - 1) * T,
        frac_zero=float(fracs.mean()), frac_zero_stderr=se_frac,
        pi0=(1 - rho) if rho < 1 else None,
        verdict=verdict, excursions=excursions,
    )


def nonlinear_particle_demo(initial: Pmf, T: int, particles: int,
                            rng: RandomStream) -> list[tuple[int, float, float]]:
    """Particle approximation of the nonlinear process.

    ``particles`` i.i.d. draws from ``initial`` evolve as M/D/1 queues whose
    common rate at each step is the current fraction of positive particles.
    Returns ``(t, estimated rho(t), exact rho(t))``. Demonstration only: the
    estimate carries the finite-population error the exact recursion avoids.
    """
    gen = rng.generator
    cdf = np.cumsum(initial.weights)
    states = np.searchsorted(cdf, gen.random(particles), side="right").astype(np.int64)
    exact_rates = exact.positive_rates(exact.nonlinear_pmf_evolve(initial, T))
    out = []
    for t in range(T + 1):
        rate = float(np.count_nonzero(states)) / particles
        out.append((t, rate, float(exact_rates[t])))
        if t < T:
            _k.particles_step(states, rate, gen)
    return out
