"""Step functions for the RBB chain, the nonlinear process and the M/D/1 queue.

All randomness comes from an explicit :class:`~rbbchaos.rng.RandomStream`;
the inner loops run in :mod:`rbbchaos.kernels`.

Scalar states (the nonlinear process and the queue) are plain ``int``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .kernels import impl as _k
from .rng import RandomStream

# slack allowed when a rate estimated from a pmf (1 - p0) is compared to r
RATE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class BinConfiguration:
    """Occupancy vector of ``L`` bins holding ``total`` balls."""

    occupancies: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancies)
        if occ.ndim != 1 or occ.size < 1:
            raise ValueError("a configuration needs at least one bin")
        if not np.issubdtype(occ.dtype, np.integer):
            if not np.all(np.equal(np.mod(occ, 1), 0)):
                raise ValueError("occupancies must be integers")
        if np.any(occ < 0):
            raise ValueError("occupancies must be nonnegative")
        if occ.dtype != np.int64 or occ.flags.writeable:
            occ = occ.astype(np.int64)
            occ.setflags(write=False)
        object.__setattr__(self, "occupancies", occ)

    @classmethod
    def of(cls, *counts: int) -> "BinConfiguration":
        return cls(np.array(counts, dtype=np.int64))

    @property
    def L(self) -> int:
        return int(self.occupancies.size)

    @property
    def total(self) -> int:
        return int(self.occupancies.sum())

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.occupancies)

    def profile(self) -> "OccupancyProfile":
        w = (self.occupancies > 0).astype(np.int64)
        return OccupancyProfile(w, Fraction(int(w.sum()), self.L))

    def permuted(self, perm: Sequence[int]) -> "BinConfiguration":
        """Configuration whose bin ``i`` holds what bin ``perm[i]`` held."""
        return BinConfiguration(self.occupancies[np.asarray(perm)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinConfiguration):
            return NotImplemented
        return np.array_equal(self.occupancies, other.occupancies)

    def __hash__(self) -> int:
        return hash(self.as_tuple())

    def __repr__(self) -> str:
        if self.L <= 12:
            return f"BinConfiguration{self.as_tuple()}"
        return f"BinConfiguration(L={self.L}, total={self.total})"


@dataclass(frozen=True)
class OccupancyProfile:
    """Indicator vector of non-empty bins and their fraction ``w_bar``."""

    w: np.ndarray
    w_bar: Fraction

    @property
    def occupied(self) -> int:
        return int(self.w.sum())


@dataclass(frozen=True)
class CoupledPath:
    """Nonlinear process ``eta`` dominated by an M/D/1 queue ``zeta``.

    ``thinned[t]`` and ``arrivals[t]`` are the arrival counts used in the
    step from ``t`` to ``t + 1``.
    """

    eta: np.ndarray
    zeta: np.ndarray
    thinned: np.ndarray
    arrivals: np.ndarray

    @property
    def horizon(self) -> int:
        return self.eta.size - 1

    def dominated(self) -> bool:
        return bool(np.all(self.eta <= self.zeta))


def _check_state(state: int) -> int:
    state = int(state)
    if state < 0:
        raise ValueError(f"state must be nonnegative, got {state}")
    return state


def rbb_step(config: BinConfiguration, rng: RandomStream) -> BinConfiguration:
    """One parallel update: every non-empty bin releases a ball and the
    released balls are thrown uniformly at random into the ``L`` bins."""
    eta = np.array(config.occupancies, dtype=np.int64)
    _k.rbb_step_inplace(eta, rng.generator)
    return BinConfiguration(eta)


def nonlinear_step(state: int, rho: float, rng: RandomStream) -> int:
    """Serve one customer if any, then add ``Poisson(rho)`` arrivals.

    ``rho`` is the current ``P(eta(t) > 0)`` and so must lie in ``[0, 1]``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    state = _check_state(state)
    return state - (state > 0) + int(_k.poisson(float(rho), rng.generator))


def md1_step(state: int, rho: float, rng: RandomStream) -> int:
    """M/D/1 queue step with arrival rate ``rho`` (any ``rho >= 0``)."""
    if rho < 0:
        raise ValueError(f"arrival rate must be nonnegative, got {rho}")
    state = _check_state(state)
    return state - (state > 0) + int(_k.poisson(float(rho), rng.generator))


def _check_coupling_rates(rho_t: float, r: float) -> float:
    if not 0.0 <= r < 1.0:
        raise ValueError(f"dominating rate r must lie in [0, 1), got {r}")
    if rho_t < 0 or rho_t > r + RATE_SLACK:
        raise ValueError(f"thinned rate {rho_t} must lie in [0, r={r}]")
    return min(float(rho_t), float(r))


def thinned_arrivals(rho_t: float, r: float, rng: RandomStream) -> tuple[int, int]:
    """Draw ``M ~ Poisson(r)`` and keep each arrival with probability ``rho_t / r``.

    Returns ``(N, M)``; ``N`` is marginally ``Poisson(rho_t)``.
    """
    rho_t = _check_coupling_rates(rho_t, r)
    n, m = _k.coupled_draw(rho_t, float(r), rng.generator)
    return int(n), int(m)


def coupled_step(
    path_tail: tuple[int, int], rho_t: float, r: float, rng: RandomStream
) -> tuple[int, int]:
    """Advance ``(eta, zeta)`` with shared arrivals so that ``eta <= zeta`` persists."""
    eta, zeta = (_check_state(x) for x in path_tail)
    if eta > zeta:
        raise ValueError(f"coupling requires eta <= zeta, got {eta} > {zeta}")
    n, m = thinned_arrivals(rho_t, r, rng)
    return eta - (eta > 0) + n, zeta - (zeta > 0) + m


def coupled_trajectory(
    x0: int, rho: Sequence[float], r: float, rng: RandomStream
) -> CoupledPath:
    """Coupled trajectory of length ``len(rho)`` started from ``eta = zeta = x0``.

    ``rho[t]`` is the nonlinear process's ``P(eta(t) > 0)``.
    """
    x0 = _check_state(x0)
    rates = np.asarray(rho, dtype=float)
    if rates.size:
        if not 0.0 <= r < 1.0:
            raise ValueError(f"dominating rate r must lie in [0, 1), got {r}")
        if rates.min() < 0 or rates.max() > r + RATE_SLACK:
            raise ValueError("every thinned rate must lie in [0, r]")
        rates = np.minimum(rates, r)
    T = rates.size
    eta = np.empty(T + 1, np.int64)
    zeta = np.empty(T + 1, np.int64)
    thinned = np.empty(T, np.int64)
    arrivals = np.empty(T, np.int64)
    _k.coupled_trajectory(x0, np.ascontiguousarray(rates), float(r), rng.generator,
                          eta, zeta, thinned, arrivals)
    return CoupledPath(eta, zeta, thinned, arrivals)


def queue_trajectory(x0: int, rates: Sequence[float], rng: RandomStream) -> np.ndarray:
    """Unit-service queue with ``Poisson(rates[t])`` arrivals at step ``t``.

    With constant rates this is the M/D/1 queue; with the rates
    ``P(eta(t) > 0)`` of a known law it is a path of the nonlinear process.
    """
    x0 = _check_state(x0)
    rates = np.ascontiguousarray(rates, dtype=float)
    if rates.size and rates.min() < 0:
        raise ValueError("arrival rates must be nonnegative")
    out = np.empty(rates.size + 1, np.int64)
    _k.queue_trajectory(x0, rates, rng.generator, out)
    return out


def md1_trajectory(zeta0: int, rho: float, steps: int, rng: RandomStream) -> np.ndarray:
    if rho < 0:
        raise ValueError(f"arrival rate must be nonnegative, got {rho}")
    return queue_trajectory(zeta0, np.full(int(steps), float(rho)), rng)


Recorder = Callable[[int, BinConfiguration], Any]


def simulate_rbb(
    initial: BinConfiguration,
    steps: int,
    rng: RandomStream,
    recorder: Recorder | None = None,
) -> list[Any]:
    """Run ``steps`` RBB updates, calling ``recorder(t, config)`` at t = 0..steps.

    The configuration handed to the recorder is a read-only view of the
    working buffer and is only valid during the call; copy it to keep it.
    Returns the recorder's return values (the configurations themselves,
    copied, when no recorder is given).
    """
    if steps < 0:
        raise ValueError(f"horizon must be nonnegative, got {steps}")
    if recorder is None:
        recorder = lambda t, c: BinConfiguration(c.occupancies.copy())  # noqa: E731
    eta = np.array(initial.occupancies, dtype=np.int64)
    view = eta.view()
    view.setflags(write=False)
    gen = rng.generator
    out = []
    for t in range(steps + 1):
        if t > 0:
            _k.rbb_step_inplace(eta, gen)
        out.append(recorder(t, BinConfiguration(view)))
    return out
