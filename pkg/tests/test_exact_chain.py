import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from rbbchaos import BinConfiguration, RandomStream
from rbbchaos import exact
from rbbchaos.ensemble import long_run_frequencies


def test_enumeration_counts_and_order():
    states = exact.enumerate_states(3, 3)
    tuples = [s.as_tuple() for s in states]
    assert len(tuples) == math.comb(5, 2) == exact.n_states(3, 3)
    assert tuples == sorted(tuples) and len(set(tuples)) == len(tuples)
    assert all(sum(t) == 3 for t in tuples)


def test_enumeration_limits():
    with pytest.raises(exact.StateSpaceTooLarge):
        exact.enumerate_states(3, 11)
    with pytest.raises(exact.StateSpaceTooLarge):
        exact.enumerate_states(40, 10)


def _brute_force(src, dst):
    # throw each released ball into every bin: an independent oracle
    src = np.array(src)
    base = src - (src > 0)
    K = int((src > 0).sum())
    L = src.size
    hits = 0
    for throw in np.ndindex(*([L] * K)):
        out = base.copy()
        for b in throw:
            out[b] += 1
        hits += tuple(out) == tuple(dst)
    return Fraction(hits, L**K)


@pytest.mark.parametrize("src", [(1, 1, 1), (3, 0, 0), (2, 1, 0), (0, 2, 1)])
def test_transition_probabilities_match_brute_force(src):
    for dst in exact.enumerate_states(3, 3):
        assert exact.transition_probability(src, dst.as_tuple()) == float(_brute_force(src, dst.as_tuple()))


def test_irreversibility_witness():
    assert exact.transition_probability((1, 1, 1), (3, 0, 0)) == 1 / 27
    assert exact.transition_probability((3, 0, 0), (1, 1, 1)) == 0.0


def test_transition_rejects_mismatched_totals():
    with pytest.raises(ValueError):
        exact.transition_probability((1, 1), (3, 0))


@pytest.mark.parametrize("N,L", [(3, 3), (4, 3), (5, 4), (2, 6)])
def test_row_sums(N, L):
    chain = exact.build_chain(N, L)
    assert np.max(np.abs(chain.row_sums() - 1)) < 1e-14


def test_sparse_and_dense_agree():
    dense = exact.build_chain(4, 4, dense=True)
    sparse = exact.build_chain(4, 4, dense=False)
    p = np.full(dense.size, 1 / dense.size)
    assert np.allclose(dense.left_multiply(p), sparse.left_multiply(p), atol=1e-15)


def test_exchangeability_of_transition_matrix():
    chain = exact.build_chain(3, 3)
    for perm in permutations(range(3)):
        for s in chain.states:
            for d in chain.states:
                assert chain.prob(s, d) == chain.prob(s.permuted(perm), d.permuted(perm))


def test_n3_l3_stationary_masses():
    chain = exact.build_chain(3, 3)
    pi = exact.stationary_rbb(chain)
    masses = {s.as_tuple(): p for s, p in zip(chain.states, pi)}
    assert masses[(1, 1, 1)] == pytest.approx(4 / 21, abs=1e-14)
    assert masses[(3, 0, 0)] == pytest.approx(1 / 21, abs=1e-14)
    assert masses[(2, 1, 0)] == pytest.approx(1 / 9, abs=1e-14)
    assert exact.stationary_residual(chain, pi) < 1e-14


@pytest.mark.parametrize("L", [2, 3, 5])
def test_single_ball_is_uniform(L):
    chain = exact.build_chain(1, L)
    assert np.allclose(exact.stationary_rbb(chain), 1 / L, atol=1e-15)


def test_n2_l2_hand_solution_and_long_run_frequencies():
    # solved by hand: P(1,1) = 1/2, P(2,0) = P(0,2) = 1/4
    chain = exact.build_chain(2, 2)
    pi = exact.stationary_rbb(chain)
    assert np.allclose(pi, [0.25, 0.5, 0.25], atol=1e-15)
    freq = long_run_frequencies(BinConfiguration.of(2, 0), 4_000_000, RandomStream(2), chain.states)
    assert 0.5 * np.abs(freq - pi).sum() < 1e-3


def test_stationary_is_permutation_invariant():
    chain = exact.build_chain(4, 3)
    pi = exact.stationary_rbb(chain)
    for s in chain.states:
        for perm in permutations(range(3)):
            assert pi[chain.index[s.permuted(perm).as_tuple()]] == pytest.approx(
                pi[chain.index[s.as_tuple()]], abs=1e-14)


@pytest.mark.parametrize("N,L", [(3, 3), (2, 2), (4, 3), (6, 4), (2, 3)])
def test_covariance_identity(N, L):
    chain = exact.build_chain(N, L)
    lhs, rhs = exact.stationary_covariance_identity(chain, exact.stationary_rbb(chain))
    assert abs(lhs - rhs) < 1e-10


def test_evolve_law_preserves_mass_and_reaches_stationarity():
    chain = exact.build_chain(3, 3)
    laws = exact.evolve_law(chain, exact.multinomial_placement_law(chain), 200)
    assert all(abs(l.sum() - 1) < 1e-13 for l in laws)
    assert np.max(np.abs(laws[-1] - exact.stationary_rbb(chain))) < 1e-12


def test_multinomial_placement_law():
    chain = exact.build_chain(2, 2)
    assert np.allclose(exact.multinomial_placement_law(chain), [0.25, 0.5, 0.25])


def test_occupancy_moments_at_n3():
    chain = exact.build_chain(3, 3)
    rho, pair = exact.occupancy_moments(chain, exact.stationary_rbb(chain))
    # stationary masses x 63: (1,1,1) -> 12, each of the 3 stacks -> 3, each of the 6 (2,1,0) -> 7
    assert rho == pytest.approx((12 + 6 * 7 * 2 / 3 + 3 * 3 / 3) / 63, abs=1e-14)
    assert pair == pytest.approx((12 + 6 * 7 / 3) / 63, abs=1e-14)


def test_chebyshev_helpers():
    assert exact.chebyshev_chaos_bound(100, 0.1, 0.25, 0.5) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        exact.chebyshev_chaos_bound(100, 0.0, 0.25, 0.5)
    # independent bins: variance rho(1-rho)/L
    assert exact.occupancy_variance_bound(4, 0.5, 0.25, 0.5) == pytest.approx(0.25 / 4 / 0.25)


def test_printed_chebyshev_bound_fails_for_negatively_correlated_bins():
    """At L = 3 with two balls the two occupied bins are strongly anti-correlated.

    The bound built from 1/(4L) + P12 - rho^2 turns negative, yet the
    occupied fraction never equals its mean, so the deviation probability is 1.
    The variance-based bound stays valid.
    """
    chain = exact.build_chain(2, 3)
    law = exact.evolve_law(chain, exact.multinomial_placement_law(chain), 20)[-1]
    rho, pair = exact.occupancy_moments(chain, law)
    w_bar = np.array([np.count_nonzero(s.occupancies) / 3 for s in chain.states])
    for delta in (0.05, 0.1):
        exceed = float(law[np.abs(w_bar - rho) > delta].sum())
        assert exceed == pytest.approx(1.0, abs=1e-12)
        assert exact.chebyshev_chaos_bound(3, delta, pair, rho) < 0
        assert exact.occupancy_variance_bound(3, delta, pair, rho) >= exceed
