import numpy as np
import pytest

from rbbchaos import kernels
from rbbchaos.kernels import BACKENDS, get_backend

pytestmark = pytest.mark.skipif(not kernels.COMPILED_AVAILABLE, reason="extension not built")


def _gen(seed=3):
    return np.random.Generator(np.random.PCG64(seed))


def test_active_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")
    assert get_backend() is kernels.impl
    with pytest.raises(ValueError):
        get_backend("fortran")


@pytest.mark.parametrize("lam", [0.0, 0.4, 3.0, 10.0, 10.5, 40.0])
def test_poisson_bit_identical(lam):
    a = [BACKENDS["compiled"].poisson(lam, g) for g in [_gen()] for _ in range(200)]
    g = _gen()
    b = [BACKENDS["python"].poisson(lam, g) for _ in range(200)]
    assert a == b


def test_rbb_simulate_bit_identical():
    outs = []
    for name in ("compiled", "python"):
        k = BACKENDS[name]
        eta = np.array([5, 0, 2, 1, 0, 0, 4], np.int64)
        occ = np.empty(301, np.int64)
        tot = np.empty(301, np.int64)
        tr = np.empty((301, 7), np.int64)
        k.rbb_simulate(eta, 300, _gen(9), occ, tot, tr)
        outs.append((eta.copy(), occ, tot, tr))
    for x, y in zip(*outs):
        assert np.array_equal(x, y)


def test_queue_and_coupled_trajectories_bit_identical():
    rates = np.linspace(0.1, 0.7, 200)
    res = {}
    for name in ("compiled", "python"):
        k = BACKENDS[name]
        q = np.empty(201, np.int64)
        k.queue_trajectory(3, rates, _gen(4), q)
        arrays = [np.empty(201, np.int64), np.empty(201, np.int64),
                  np.empty(200, np.int64), np.empty(200, np.int64)]
        k.coupled_trajectory(2, rates, 0.75, _gen(5), *arrays)
        res[name] = [q, *arrays]
    for x, y in zip(res["compiled"], res["python"]):
        assert np.array_equal(x, y)


def test_particles_step_bit_identical():
    a = np.arange(50, dtype=np.int64) % 4
    b = a.copy()
    BACKENDS["compiled"].particles_step(a, 0.6, _gen(1))
    BACKENDS["python"].particles_step(b, 0.6, _gen(1))
    assert np.array_equal(a, b)
