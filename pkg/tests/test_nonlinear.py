import numpy as np
import pytest

from rbbchaos import RandomStream, exact
from rbbchaos.checks import convergence_to_equilibrium, nonlinear_particle_demo
from rbbchaos.pmf import Pmf, tv_distance


def test_serve_shifts_mass_down():
    assert np.allclose(exact.serve(np.array([0.2, 0.3, 0.5])), [0.5, 0.5])


def test_queue_step_law_from_empty_is_poisson():
    w = exact.queue_step_law(np.array([1.0]), 0.7)
    expected = Pmf.poisson(0.7, tol=1e-17)
    n = min(w.size, expected.weights.size)
    assert np.allclose(w[:n], expected.weights[:n], atol=1e-16)


@pytest.mark.parametrize("masses", [[0.5, 0.5], [1, 1, 1, 1, 1], [0.1, 0.0, 0.0, 0.9]])
def test_mean_is_conserved(masses):
    law = Pmf.from_masses(masses)
    laws = exact.nonlinear_pmf_evolve(law, 150)
    assert max(abs(p.mean() - law.mean()) for p in laws) < 1e-10


def test_rate_sequence_is_probability_positive():
    laws = exact.nonlinear_pmf_evolve(Pmf.from_masses([0.5, 0.5]), 20)
    rates = exact.positive_rates(laws)
    assert rates[0] == 0.5
    assert np.all((rates >= 0) & (rates <= 1))


def test_empty_start_stays_empty():
    laws = exact.nonlinear_pmf_evolve(Pmf.delta(0), 10)
    assert all(p.weights[0] == 1.0 for p in laws)
    tv = convergence_to_equilibrium(0.0, Pmf.delta(0), 10)
    assert all(d == 0.0 for _, d in tv)


def test_equilibrium_start_stays_put():
    pi = exact.md1_stationary_pmf(exact.rho_of_r(0.4))
    tv = convergence_to_equilibrium(0.4, pi, 50)
    assert max(d for _, d in tv) < 1e-10


def test_convergence_to_equilibrium_is_eventually_tiny():
    tv = convergence_to_equilibrium(0.5, Pmf.from_masses([0.5, 0.5]), 500)
    assert tv[-1][1] < 1e-6
    # past the first steps the distance keeps shrinking (up to accumulated tail bounds)
    values = [d for _, d in tv]
    assert all(b <= a + 1e-12 for a, b in zip(values[5:], values[6:]))


def test_convergence_rejects_wrong_mean_or_load():
    with pytest.raises(ValueError):
        convergence_to_equilibrium(0.5, Pmf.from_masses([0.2, 0.8]), 5)
    with pytest.raises(ValueError):
        convergence_to_equilibrium(1.0, Pmf.delta(1), 5)


def test_particle_demo_tracks_exact_rates():
    out = nonlinear_particle_demo(Pmf.from_masses([0.5, 0.5]), 30, 20_000, RandomStream(6))
    errors = [abs(est - ex) for _, est, ex in out]
    assert max(errors) < 0.03


def test_tail_budget_enforced():
    from rbbchaos.pmf import TruncationError
    with pytest.raises(TruncationError):
        exact.queue_pmf_evolve(Pmf.delta(0), 10_000, rate=0.9, tol=1e-16)


def test_law_distances_shrink_between_starts():
    a = exact.nonlinear_pmf_evolve(Pmf.from_masses([0.5, 0.5]), 200)[-1]
    b = exact.nonlinear_pmf_evolve(Pmf.from_masses([0.75, 0, 0.25]), 200)[-1]
    assert tv_distance(a, b) < 1e-4
