"""Randomised invariants checked over many generated inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from rbbchaos import BinConfiguration, RandomStream, coupled_trajectory, rbb_step, simulate_rbb
from rbbchaos import exact
from rbbchaos.pmf import Pmf

configs = st.lists(st.integers(0, 6), min_size=1, max_size=8)
seeds = st.integers(0, 2**32)


@given(configs, seeds)
@settings(max_examples=60, deadline=None)
def test_rbb_conserves_balls_and_nonnegativity(occ, seed):
    start = BinConfiguration(np.array(occ))
    for c in simulate_rbb(start, 10, RandomStream(seed)):
        assert c.total == sum(occ) and c.occupancies.min() >= 0


@given(configs, seeds)
@settings(max_examples=60, deadline=None)
def test_one_step_reachability(occ, seed):
    # every bin loses at most one ball in a step
    start = BinConfiguration(np.array(occ))
    nxt = rbb_step(start, RandomStream(seed))
    assert np.all(nxt.occupancies >= start.occupancies - 1)


@given(st.integers(0, 10), st.lists(st.floats(0, 0.9), min_size=1, max_size=60), seeds)
@settings(max_examples=60, deadline=None)
def test_coupling_never_breaks_domination(x0, rates, seed):
    path = coupled_trajectory(x0, rates, 0.9, RandomStream(seed))
    assert path.dominated()


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda m: sum(m) > 0.1))
@settings(max_examples=40, deadline=None)
def test_nonlinear_mean_conserved(masses):
    law = Pmf.from_masses(masses)
    laws = exact.nonlinear_pmf_evolve(law, 30)
    assert abs(laws[-1].mean() - law.mean()) < 1e-10


@given(st.floats(0.0, 0.95))
@settings(max_examples=40, deadline=None)
def test_md1_equilibrium_has_mass_one_minus_rho_at_zero(rho):
    p = exact.md1_stationary_pmf(rho)
    assert abs(p.weights[0] - (1 - rho)) < 1e-14
    assert abs(p.weights.sum() + p.tail_bound - 1) < 1e-11
