"""Replica ensembles of the RBB chain.

Replica ``i`` draws its initial configuration and its whole trajectory from
``RandomStream(master_seed, i)``; aggregation runs in replica order, so the
output does not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .kernels import impl as _k
from .pmf import Pmf
from .rng import RandomStream

INITIALIZERS = ("explicit", "iid", "multinomial", "equal")
HIST_CAP = 64


class ConservationError(AssertionError):
    pass


def balls_for_load(r: float, L: int) -> int:
    """``round(r L)`` with halves rounded up."""
    return int(np.floor(r * L + 0.5))


@dataclass(frozen=True)
class Initializer:
    """How replicas place their ``N`` balls at time 0.

    ``explicit``
        the fixed vector ``params["occupancies"]``.
    ``iid``
        i.i.d. draws from ``params["mu"]`` (a :class:`Pmf`) or from
        ``Poisson(params["poisson_mean"])``, then repaired to exactly ``N``
        balls by throwing missing balls uniformly or removing uniformly
        chosen balls.
    ``multinomial``
        ``N`` balls thrown independently and uniformly; the same as i.i.d.
        Poisson occupancies conditioned on their sum.
    ``equal``
        deterministic equal load, the ``N mod L`` extra balls in the first bins.
    """

    kind: str = "multinomial"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in INITIALIZERS:
            raise ValueError(f"unknown initializer {self.kind!r}; choose from {INITIALIZERS}")
        if self.kind == "explicit" and "occupancies" not in self.params:
            raise ValueError("explicit initializer needs params['occupancies']")
        if self.kind == "iid":
            if ("mu" in self.params) == ("poisson_mean" in self.params):
                raise ValueError("iid initializer needs exactly one of 'mu' or 'poisson_mean'")
            if self.params.get("poisson_mean", 0) < 0:
                raise ValueError("poisson_mean must be nonnegative")

    def draw(self, L: int, N: int, rng: RandomStream) -> np.ndarray:
        gen = rng.generator
        if self.kind == "explicit":
            eta = np.array(self.params["occupancies"], dtype=np.int64)
            if eta.size != L or eta.sum() != N or np.any(eta < 0):
                raise ValueError(f"explicit occupancies do not describe {N} balls in {L} bins")
            return eta
        if self.kind == "equal":
            eta = np.full(L, N // L, dtype=np.int64)
            eta[: N % L] += 1
            return eta
        if self.kind == "multinomial":
            return gen.multinomial(N, np.full(L, 1.0 / L)).astype(np.int64)
        if "mu" in self.params:
            mu: Pmf = self.params["mu"]
            cdf = np.cumsum(mu.weights)
            eta = np.searchsorted(cdf, gen.random(L), side="right").astype(np.int64)
        else:
            eta = np.empty(L, np.int64)
            _k.poisson_fill(float(self.params["poisson_mean"]), eta, gen)
        return _repair(eta, N, gen)

    def marginal(self, L: int, N: int) -> Pmf:
        """Law of a single bin's occupancy at time 0.

        Exact for ``multinomial``, ``equal`` and ``explicit`` (a uniformly
        chosen bin); for ``iid`` the un-repaired ``mu``.
        """
        if self.kind == "multinomial":
            return Pmf.binomial(N, 1.0 / L)
        if self.kind == "iid":
            if "mu" in self.params:
                return self.params["mu"]
            return Pmf.poisson(float(self.params["poisson_mean"]), tol=1e-15)
        eta = self.draw(L, N, RandomStream(0))
        return Pmf(np.bincount(eta) / L)


def _repair(eta: np.ndarray, N: int, gen: np.random.Generator) -> np.ndarray:
    diff = N - int(eta.sum())
    L = eta.size
    if diff > 0:
        eta += gen.multinomial(diff, np.full(L, 1.0 / L))
    elif diff < 0:
        eta -= gen.multivariate_hypergeometric(eta, -diff)
    return eta


def as_initializer(value) -> Initializer:
    if isinstance(value, Initializer):
        return value
    if isinstance(value, str):
        return Initializer(value)
    if isinstance(value, dict):
        params = dict(value)
        return Initializer(params.pop("kind"), params)
    raise TypeError(f"cannot build an initializer from {value!r}")


@dataclass(frozen=True)
class ReplicaRun:
    """Raw output of one replica: per-step occupied-bin count and ball total,
    tracked coordinates ``track[t, j]`` and the final occupancies."""

    occupied: np.ndarray
    totals: np.ndarray
    track: np.ndarray
    final: np.ndarray


def run_replica(L: int, N: int, init: Initializer, steps: int, rng: RandomStream,
                track: int = 2) -> ReplicaRun:
    eta = init.draw(L, N, rng)
    m = min(track, L)
    occupied = np.empty(steps + 1, np.int64)
    totals = np.empty(steps + 1, np.int64)
    tr = np.empty((steps + 1, m), np.int64)
    _k.rbb_simulate(eta, steps, rng.generator, occupied, totals, tr)
    if np.any(totals != N):
        raise ConservationError(f"ball count drifted from {N}: {totals[totals != N][:3]}")
    return ReplicaRun(occupied, totals, tr, eta)


def map_replicas(fn: Callable[[int, RandomStream], Any], replicas: int, rng: RandomStream,
                 threads: int = 1) -> list[Any]:
    """``[fn(i, RandomStream(rng.master_seed, i)) for i in range(replicas)]``, possibly threaded."""
    streams = rng.spawn(replicas)
    if threads <= 1 or replicas <= 1:
        return [fn(i, s) for i, s in enumerate(streams)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicas), streams))


@dataclass(frozen=True)
class EnsembleStats:
    """Replica summaries at one time step.

    ``marginal_counts[k]`` counts replicas whose bin 1 holds ``k`` balls
    (the last entry lumps ``k >= HIST_CAP``); ``pair_counts[a, b]`` counts
    replicas with ``1(bin1 > 0) = a`` and ``1(bin2 > 0) = b``.
    """

    t: int
    occupied_fraction: float
    marginal_counts: np.ndarray
    pair_counts: np.ndarray
    mean_load: float
    replicas: int


@dataclass
class EnsembleResult:
    L: int
    N: int
    steps: int
    stats: list[EnsembleStats]
    occupied: np.ndarray  # (R, T+1) number of non-empty bins
    track: np.ndarray  # (R, T+1, m) first m occupancies
    final_counts: np.ndarray  # histogram of all bins at time T, pooled over replicas

    @property
    def replicas(self) -> int:
        return self.occupied.shape[0]

    def pooled_marginal(self) -> Pmf:
        """Empirical single-bin law at time T, pooled over bins and replicas."""
        return Pmf(self.final_counts / self.final_counts.sum())


def run_ensemble_rbb(
    L: int,
    N: int,
    initializer: Initializer | str | dict = "multinomial",
    steps: int = 0,
    replicas: int = 1,
    rng: RandomStream | None = None,
    threads: int = 1,
    track: int = 2,
) -> EnsembleResult:
    """Run ``replicas`` independent RBB trajectories and summarise each step."""
    if replicas < 1:
        raise ValueError(f"need at least one replica, got {replicas}")
    if L < 1 or N < 0 or steps < 0:
        raise ValueError(f"invalid sizes L={L}, N={N}, steps={steps}")
    init = as_initializer(initializer)
    rng = rng if rng is not None else RandomStream(0)

    runs = map_replicas(lambda i, s: run_replica(L, N, init, steps, s, track=max(track, 2)),
                        replicas, rng, threads)
    occupied = np.stack([run.occupied for run in runs])
    tracked = np.stack([run.track for run in runs])
    final_counts = np.zeros(N + 1, np.int64)
    for run in runs:
        final_counts += np.bincount(run.final, minlength=N + 1)

    stats = []
    mean_load = N / L
    for t in range(steps + 1):
        b1 = tracked[:, t, 0]
        b1c = np.bincount(np.minimum(b1, HIST_CAP), minlength=HIST_CAP + 1)
        pair = np.zeros((2, 2), np.int64)
        if L >= 2:
            np.add.at(pair, ((b1 > 0).astype(int), (tracked[:, t, 1] > 0).astype(int)), 1)
        stats.append(EnsembleStats(
            t=t,
            occupied_fraction=float(occupied[:, t].mean() / L),
            marginal_counts=b1c,
            pair_counts=pair,
            mean_load=mean_load,
            replicas=replicas,
        ))
    return EnsembleResult(L, N, steps, stats, occupied, tracked[:, :, :track], final_counts)


def long_run_frequencies(initial, steps: int, rng: RandomStream, states) -> np.ndarray:
    """Fraction of times 1..steps spent in each of ``states`` along one trajectory."""
    eta = np.array(initial.occupancies if hasattr(initial, "occupancies") else initial,
                   dtype=np.int64)
    L = eta.size
    # encode states in base (N+1) to count them without Python per-step work
    N = int(eta.sum())
    weights = (N + 1) ** np.arange(L - 1, -1, -1, dtype=np.int64)
    codes = {int(np.dot(s.occupancies, weights)): i for i, s in enumerate(states)}
    counts = np.zeros(len(states), np.int64)
    chunk = 100_000
    done = 0
    gen = rng.generator
    while done < steps:
        n = min(chunk, steps - done)
        occ = np.empty(n + 1, np.int64)
        tot = np.empty(n + 1, np.int64)
        tr = np.empty((n + 1, L), np.int64)
        _k.rbb_simulate(eta, n, gen, occ, tot, tr)
        code, freq = np.unique(tr[1:] @ weights, return_counts=True)
        for c, f in zip(code, freq):
            counts[codes[int(c)]] += f
        done += n
    return counts / steps
