import math

import numpy as np
import pytest
from scipy import stats

from rbbchaos.pmf import Pmf, poisson_cutoff, poisson_tail_bound, tv_distance


def test_delta_and_moments():
    p = Pmf.delta(3)
    assert p.mean() == 3.0
    assert p.prob_positive() == 1.0
    assert Pmf.delta(0).prob_positive() == 0.0


def test_from_masses_normalises():
    p = Pmf.from_masses([1, 1, 2])
    assert np.allclose(p.weights, [0.25, 0.25, 0.5])


def test_weights_read_only():
    p = Pmf.from_masses([0.5, 0.5])
    with pytest.raises(ValueError):
        p.weights[0] = 1.0


@pytest.mark.parametrize("bad", [[-0.1, 1.1], [0.7, 0.7]])
def test_invalid_weights_rejected(bad):
    with pytest.raises(ValueError):
        Pmf(np.array(bad))


@pytest.mark.parametrize("mean", [0.1, 0.8, 3.0, 25.0])
def test_poisson_matches_scipy(mean):
    p = Pmf.poisson(mean, tol=1e-14)
    k = np.arange(p.n_max + 1)
    assert np.max(np.abs(p.weights - stats.poisson.pmf(k, mean))) < 1e-15
    # certified tail dominates the true tail
    assert stats.poisson.sf(p.n_max, mean) <= p.tail_bound + 1e-300
    assert p.tail_bound <= 1e-14


def test_poisson_tail_bound_is_an_upper_bound():
    for mean in (0.2, 1.0, 7.0):
        for n in range(0, 40, 3):
            assert stats.poisson.sf(n, mean) <= poisson_tail_bound(mean, n) + 1e-300
    assert poisson_cutoff(1.0, 1e-12) >= 1


def test_char_fn_of_delta():
    assert abs(Pmf.delta(2).char_fn(0.3) - complex(math.cos(0.6), math.sin(0.6))) < 1e-15


def test_binomial_matches_scipy():
    p = Pmf.binomial(5, 0.3)
    assert np.allclose(p.weights, stats.binom.pmf(np.arange(6), 5, 0.3), atol=1e-15)


def test_tv_distance_examples():
    assert tv_distance(Pmf.delta(0), Pmf.delta(1)) == 1.0
    assert tv_distance(Pmf.delta(2), Pmf.delta(2)) == 0.0
    p = Pmf.from_masses([0.5, 0.5])
    q = Pmf.from_masses([0.25, 0.25, 0.5])
    assert math.isclose(tv_distance(p, q), 0.5, abs_tol=1e-15)
    assert tv_distance(p, q) == tv_distance(q, p)
