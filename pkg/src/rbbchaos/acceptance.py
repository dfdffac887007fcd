"""The twelve acceptance checks, runnable from the CLI (``verify-all``) and pytest."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import exact
from .chaos import chaos_sweep, chebyshev_check
from .checks import convergence_to_equilibrium, exponential_moment_check, regime_demo
from .ensemble import map_replicas
from .pmf import Pmf, tv_distance
from .processes import coupled_trajectory
from .rng import RandomStream

RATES = (0.1, 0.3, 0.5, 0.7, 0.9)
X_GRID = tuple(round(0.1 * k, 1) for k in range(1, 31))


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str]]) -> CriterionResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


def exact_stationary_n3() -> CriterionResult:
    def run():
        chain = exact.build_chain(3, 3)
        pi = exact.stationary_rbb(chain, tol=1e-12)
        res = exact.stationary_residual(chain, pi)
        expected = {}
        for s in chain.states:
            occ = s.as_tuple()
            expected[occ] = 4 / 21 if occ == (1, 1, 1) else (1 / 21 if max(occ) == 3 else 1 / 9)
        err = max(abs(pi[chain.index[k]] - v) for k, v in expected.items())
        return err <= 1e-12 and res <= 1e-12, f"max mass error {err:.2e}, residual {res:.2e}"

    out = _timed(1, "exact stationary measure N=L=3", run)
    out.passed = out.passed and out.seconds < 1.0
    return out


def irreversibility() -> CriterionResult:
    def run():
        fwd = exact.transition_probability((1, 1, 1), (3, 0, 0))
        back = exact.transition_probability((3, 0, 0), (1, 1, 1))
        return fwd > 0 and back == 0, f"P(111->300)={fwd!r}, P(300->111)={back!r}"

    return _timed(2, "irreversibility witness", run)


def rho_r_consistency() -> CriterionResult:
    def run():
        mean_err = fp_err = 0.0
        for r in RATES:
            rho = exact.rho_of_r(r)
            mean_err = max(mean_err, abs(exact.md1_stationary_pmf(rho).mean() - r))
            fp_err = max(fp_err, abs(-rho * rho + 2 * rho * (r + 1) - 2 * r))
        return mean_err <= 1e-8 and fp_err <= 1e-12, f"mean error {mean_err:.2e}, fixed-point error {fp_err:.2e}"

    out = _timed(3, "rho_r consistency", run)
    out.passed = out.passed and out.seconds < 1.0
    return out


def char_fn_match() -> CriterionResult:
    def run():
        worst = 0.0
        for rho in RATES:
            pmf = exact.md1_stationary_pmf(rho)
            for x in X_GRID:
                worst = max(worst, abs(pmf.char_fn(x) - exact.md1_char_fn(rho, x)))
        return worst <= 1e-8, f"max |DFT - closed form| = {worst:.2e} over 5 x 30 points"

    return _timed(4, "characteristic function match", run)


MEAN_LAWS = {
    "half-half": Pmf.from_masses([0.5, 0.5]),
    "poisson(0.7)": Pmf.poisson(0.7, tol=1e-15),
    "uniform{0..4}": Pmf.from_masses([1, 1, 1, 1, 1]),
}


def mean_conservation() -> CriterionResult:
    def run():
        worst = 0.0
        for law in MEAN_LAWS.values():
            m0 = law.mean()
            laws = exact.nonlinear_pmf_evolve(law, 200)
            worst = max(worst, max(abs(p.mean() - m0) for p in laws))
        return worst <= 1e-10, f"max mean drift {worst:.2e} over 200 steps, 3 laws"

    return _timed(5, "mean conservation", run)


def stationarity_of_pi() -> CriterionResult:
    def run():
        worst = 0.0
        for rho in (0.2, 0.5, 0.8):
            pi = exact.md1_stationary_pmf(rho)
            nxt = exact.nonlinear_pmf_evolve(pi, 1)[1]
            worst = max(worst, tv_distance(nxt, pi))
        return worst <= 1e-10, f"max TV after one step {worst:.2e}"

    return _timed(6, "stationarity of pi_rho", run)


def convergence() -> CriterionResult:
    def run():
        tv = convergence_to_equilibrium(0.5, Pmf.from_masses([0.5, 0.5]), 500)
        first = next((t for t, d in tv if d < 1e-6), None)
        return first is not None, f"TV < 1e-6 first at t={first}; TV(500)={tv[-1][1]:.2e}"

    out = _timed(7, "convergence to pi_rho_r", run)
    out.passed = out.passed and out.seconds < 10.0
    return out


def drift_bound() -> CriterionResult:
    def run():
        bad_bound = bad_env = 0
        worst_bound = worst_env = 0.0
        for rho in (0.3, 0.5, 0.9):
            for zeta0 in (0, 5, 20):
                for row in exponential_moment_check(rho, zeta0, 200):
                    bad_bound += not row.within_bound
                    bad_env += not row.within_envelope
                    worst_bound = max(worst_bound, row.moment / row.bound)
                    worst_env = max(worst_env, row.moment / row.envelope)
        return bad_bound == 0 and bad_env == 0, (
            f"C e^(lambda zeta0): {bad_bound} violations (max ratio {worst_bound:.4f}); "
            f"envelope: {bad_env} violations (max ratio {worst_env:.4f})")

    return _timed(8, "exponential-moment drift bound", run)


def coupling(seed: int = 42, trajectories: int = 10_000, horizon: int = 1_000,
             r: float = 0.8, threads: int = 1) -> CriterionResult:
    def run():
        initial = Pmf.poisson(r, tol=1e-15)
        rates = exact.positive_rates(exact.nonlinear_pmf_evolve(initial, horizon - 1))
        cdf = np.cumsum(initial.weights)

        def one(i, stream):
            x0 = int(np.searchsorted(cdf, stream.generator.random(), side="right"))
            path = coupled_trajectory(x0, rates, r, stream)
            return int(np.count_nonzero(path.eta > path.zeta)), np.bincount(path.thinned, minlength=8)[:8], \
                int(np.count_nonzero(path.thinned >= 7))

        runs = map_replicas(one, trajectories, RandomStream(seed).child(9), threads)
        violations = sum(x[0] for x in runs)
        observed = np.sum([x[1] for x in runs], axis=0).astype(float)
        observed[7] = sum(x[2] for x in runs)
        ks = np.arange(8)
        probs = np.array([stats.poisson.pmf(ks, lam) for lam in rates]).mean(axis=0)
        probs[7] = 1.0 - probs[:7].sum()
        expected = probs * trajectories * horizon
        # merge sparse upper cells until every expected count is at least 5
        while expected[-1] < 5 and expected.size > 2:
            expected[-2] += expected[-1]
            observed[-2] += observed[-1]
            expected, observed = expected[:-1], observed[:-1]
        pval = stats.chisquare(observed, expected).pvalue
        return violations == 0 and pval > 1e-3, f"{violations} domination violations; thinning chi-square p={pval:.3g}"

    return _timed(9, "coupling domination and thinning", run)


CHAOS_REPLICAS = {10: 4000, 100: 1000, 1000: 200}


def chaos(seed: int = 42, threads: int = 1) -> CriterionResult:
    def run():
        rep = chaos_sweep([10, 100, 1000], 0.5, 50, CHAOS_REPLICAS, RandomStream(seed).child(10),
                          threads=threads)
        drop, se = rep.end_to_end_drop()
        ok = (
            rep.strictly_decreasing()
            and max(rep.stderr) < 1e-3
            and drop > 3 * se
            and rep.marginal_tv[-1] <= 0.02
        )
        gaps = ", ".join(f"L={L}: {g:.2e}+-{s:.1e}" for L, g, s in zip(rep.L_values, rep.gap, rep.stderr))
        return ok, f"gaps {gaps}; marginal TV at L=1000 {rep.marginal_tv[-1]:.4f}"

    out = _timed(10, "propagation of chaos", run)
    out.passed = out.passed and out.seconds < 300
    return out


def chebyshev(seed: int = 42, threads: int = 1) -> CriterionResult:
    def run():
        base = RandomStream(seed).child(11)
        # L = 3 at N = 3, the exact example chain
        checks = chebyshev_check(3, 1.0, 20, (0.05, 0.1), 20_000, base.child(3), use_exact=True,
                                 threads=threads)
        checks += chebyshev_check(100, 0.5, 20, (0.05, 0.1), 2_000, base.child(100), use_exact=False,
                                  threads=threads)
        ok = all(c.holds for c in checks)
        detail = "; ".join(f"L={c.L} d={c.delta}: {c.exceed_prob:.3f} <= {c.bound:.3f}" for c in checks)
        return ok, detail

    return _timed(11, "Chebyshev bound validity", run)


def regime(seed: int = 42, threads: int = 1) -> CriterionResult:
    def run():
        base = RandomStream(seed).child(12)
        hi = regime_demo(1.2, 10_000, 100, base.child(1), threads=threads)
        lo = regime_demo(0.5, 100_000, 20, base.child(2), threads=threads)
        ok_hi = abs(hi.mean_final - 2000) <= 200
        ok_lo = abs(lo.frac_zero - 0.5) <= 3 * lo.frac_zero_stderr
        return ok_hi and ok_lo, (f"rho=1.2 mean final {hi.mean_final:.1f} (target 2000 +-10%); "
                                 f"rho=0.5 time at 0 {lo.frac_zero:.4f}+-{lo.frac_zero_stderr:.4f}")

    return _timed(12, "regime classification", run)


def run_all(seed: int = 42, threads: int = 1) -> list[CriterionResult]:
    return [
        exact_stationary_n3(),
        irreversibility(),
        rho_r_consistency(),
        char_fn_match(),
        mean_conservation(),
        stationarity_of_pi(),
        convergence(),
        drift_bound(),
        coupling(seed, threads=threads),
        chaos(seed, threads=threads),
        chebyshev(seed, threads=threads),
        regime(seed, threads=threads),
    ]


def format_table(results: list[CriterionResult]) -> str:
    lines = [r.line() for r in results]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(lines)


__all__ = ["CriterionResult", "run_all", "format_table"]
