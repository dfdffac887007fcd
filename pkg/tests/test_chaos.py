import numpy as np
import pytest

from rbbchaos import RandomStream, exact
from rbbchaos.chaos import (PathFunctional, chaos_gap, chaos_sweep, chebyshev_check,
                            nonlinear_laws_from, path_functional_test)
from rbbchaos.ensemble import Initializer, run_ensemble_rbb
from rbbchaos.pmf import Pmf


def test_exchangeable_estimator_on_known_counts():
    # K = 2 of L = 4 bins occupied in every replica
    occupied = np.full(10, 2)
    est = chaos_gap(occupied, np.zeros((10, 2)), 4)
    assert est.pair_prob == pytest.approx(2 / 12)
    assert est.rho_hat == pytest.approx(0.5)
    assert est.gap == pytest.approx(abs(2 / 12 - 0.25))


def test_estimator_validation():
    with pytest.raises(ValueError):
        chaos_gap(np.ones(4), np.ones((4, 2)), 1)
    with pytest.raises(ValueError):
        chaos_gap(np.ones(4), np.ones((4, 2)), 3, estimator="magic")


def test_gap_vanishes_for_iid_start():
    """Bins 1 and 2 of an i.i.d. start (before any repair matters) are independent."""
    L = 1000
    res = run_ensemble_rbb(L, 500, Initializer("iid", {"poisson_mean": 0.5}), 0, 4000, RandomStream(1))
    est = chaos_gap(res.occupied[:, 0], res.track[:, 0, :2], L, estimator="bins12")
    assert est.gap < 3 * est.stderr + 2e-3


def test_exchangeable_estimator_matches_exact_chain():
    L, N, T = 4, 4, 6
    res = run_ensemble_rbb(L, N, "multinomial", T, 20_000, RandomStream(2))
    est = chaos_gap(res.occupied[:, T], res.track[:, T, :2], L)
    chain = exact.build_chain(N, L)
    law = exact.evolve_law(chain, exact.multinomial_placement_law(chain), T)[-1]
    rho, pair = exact.occupancy_moments(chain, law)
    assert abs(est.rho_hat - rho) < 4 * 0.5 / np.sqrt(20_000)
    assert abs(est.gap - abs(pair - rho * rho)) < 4 * est.stderr + 1e-3


def test_sweep_gap_shrinks_with_L():
    rep = chaos_sweep([10, 100], 0.5, 10, {10: 1500, 100: 300}, RandomStream(3))
    assert rep.gap[1] < rep.gap[0]
    assert rep.strictly_decreasing()
    assert all(s > 0 for s in rep.stderr)
    assert len(rep.rows()) == 2


def test_sweep_is_thread_independent():
    a = chaos_sweep([10, 30], 0.5, 5, 50, RandomStream(4), threads=1)
    b = chaos_sweep([10, 30], 0.5, 5, 50, RandomStream(4), threads=2)
    assert a.gap == b.gap and a.stderr == b.stderr


def test_nonlinear_start_is_binomial_marginal():
    laws = nonlinear_laws_from(Initializer("multinomial"), 10, 5, 3)
    assert np.allclose(laws[0].weights, Pmf.binomial(5, 0.1).weights)


def test_constant_functional_is_exact():
    out = path_functional_test(50, 0.5, [PathFunctional.constant()] * 2, 5, 20, RandomStream(5))
    assert out.empirical_product == 1.0
    assert out.product_of_nonlinear == pytest.approx(1.0, abs=1e-12)


def test_single_site_functional_at_large_L():
    f = PathFunctional.empty_at(8)
    lhs, rhs, se = path_functional_test(1000, 0.5, [f], 8, 200, RandomStream(6))
    assert abs(lhs - rhs) < 4 * se + 2e-3


def test_two_site_gap_shrinks():
    f = [PathFunctional.positive_at(5), PathFunctional.positive_at(5)]
    small = path_functional_test(6, 0.5, f, 5, 6000, RandomStream(7))
    large = path_functional_test(600, 0.5, f, 5, 200, RandomStream(8))
    assert abs(large.empirical_product - large.product_of_nonlinear) < \
        abs(small.empirical_product - small.product_of_nonlinear)


def test_functional_expectation_matches_marginal():
    laws = exact.nonlinear_pmf_evolve(Pmf.from_masses([0.5, 0.5]), 4)
    assert PathFunctional.empty_at(4).expectation(laws) == pytest.approx(laws[4].weights[0])
    assert PathFunctional.capped(2, 3).expectation(laws) == pytest.approx(
        laws[2].expect(lambda k: np.minimum(k, 3)))
    # a cylinder over two times equals a two-step transition computation
    cyl = PathFunctional.cylinder({0: 1, 1: 0})
    assert cyl.expectation(laws) == pytest.approx(0.5 * np.exp(-0.5))


def test_functional_bound_enforced():
    f = PathFunctional({0: lambda x: x.astype(float)}, 1.0, "eta(0)")
    with pytest.raises(ValueError):
        f.evaluate(np.array([[3]]))


def test_chebyshev_check_at_exact_example_chain():
    checks = chebyshev_check(3, 1.0, 10, (0.05, 0.1), 4000, RandomStream(9), use_exact=True)
    assert all(c.exact and c.holds for c in checks)


def test_chebyshev_check_large_L():
    checks = chebyshev_check(100, 0.5, 10, (0.1,), 400, RandomStream(10), use_exact=False)
    assert checks[0].holds and checks[0].variance_bound >= 0
