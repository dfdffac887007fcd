import numpy as np
import pytest
from scipy import stats

from rbbchaos import BinConfiguration, RandomStream, exact
from rbbchaos.ensemble import (ConservationError, Initializer, as_initializer, balls_for_load,
                               long_run_frequencies, map_replicas, run_ensemble_rbb, run_replica)
from rbbchaos.pmf import Pmf

from conftest import chi_square_p


def test_balls_for_load_rounds_half_up():
    assert balls_for_load(0.5, 3) == 2
    assert balls_for_load(0.5, 100) == 50
    assert balls_for_load(0.25, 2) == 1


def test_initializer_validation():
    with pytest.raises(ValueError):
        Initializer("nope")
    with pytest.raises(ValueError):
        Initializer("explicit")
    with pytest.raises(ValueError):
        Initializer("iid", {})
    assert as_initializer({"kind": "iid", "poisson_mean": 1.0}).params == {"poisson_mean": 1.0}


@pytest.mark.parametrize("kind,params", [
    ("multinomial", {}), ("equal", {}), ("iid", {"poisson_mean": 0.5}),
    ("iid", {"mu": Pmf.from_masses([0.2, 0.8])}), ("explicit", {"occupancies": [3, 0, 0, 2, 0]}),
])
def test_every_initializer_places_exactly_n(kind, params):
    init = Initializer(kind, params)
    for i in range(20):
        eta = init.draw(5, 5, RandomStream(1, i))
        assert eta.sum() == 5 and eta.size == 5 and eta.min() >= 0


def test_equal_initializer_layout():
    assert Initializer("equal").draw(4, 6, RandomStream(0)).tolist() == [2, 2, 1, 1]


def test_multinomial_marginal_is_binomial():
    init = Initializer("multinomial")
    draws = np.array([init.draw(4, 6, RandomStream(3, i))[0] for i in range(8000)])
    probs = stats.binom.pmf(np.arange(7), 6, 0.25)
    assert chi_square_p(np.bincount(draws, minlength=7), probs) > 1e-4
    assert np.allclose(init.marginal(4, 6).weights, probs, atol=1e-15)


def test_run_replica_conserves_and_checks():
    run = run_replica(6, 9, Initializer("multinomial"), 50, RandomStream(4))
    assert np.all(run.totals == 9)
    assert run.final.sum() == 9


def test_conservation_error_type():
    assert issubclass(ConservationError, AssertionError)


def test_map_replicas_is_ordered_and_thread_independent():
    fn = lambda i, s: (i, s.generator.integers(1 << 30))  # noqa: E731
    a = map_replicas(fn, 16, RandomStream(2), threads=1)
    b = map_replicas(fn, 16, RandomStream(2), threads=4)
    assert a == b and [x[0] for x in a] == list(range(16))


def test_ensemble_results_do_not_depend_on_threads():
    a = run_ensemble_rbb(20, 10, "multinomial", 30, 40, RandomStream(8), threads=1)
    b = run_ensemble_rbb(20, 10, "multinomial", 30, 40, RandomStream(8), threads=3)
    assert np.array_equal(a.occupied, b.occupied)
    assert np.array_equal(a.track, b.track)
    assert np.array_equal(a.final_counts, b.final_counts)


def test_ensemble_stats_invariants():
    L, N, R = 12, 5, 30
    res = run_ensemble_rbb(L, N, "multinomial", 25, R, RandomStream(9))
    for st in res.stats:
        assert 0 <= st.occupied_fraction <= min(1.0, N / L)
        assert st.marginal_counts.sum() == R and st.pair_counts.sum() == R
        assert st.mean_load == N / L
    assert res.pooled_marginal().mean() == pytest.approx(N / L)


def test_long_run_frequencies_match_exact_n3():
    chain = exact.build_chain(3, 3)
    pi = exact.stationary_rbb(chain)
    freq = long_run_frequencies(BinConfiguration.of(3, 0, 0), 2_000_000, RandomStream(5), chain.states)
    assert 0.5 * np.abs(freq - pi).sum() < 1e-3


def test_invalid_sizes():
    with pytest.raises(ValueError):
        run_ensemble_rbb(0, 1, steps=1)
    with pytest.raises(ValueError):
        run_ensemble_rbb(3, 3, steps=1, replicas=0)
