"""Pure-Python versions of the compiled kernels.

Same signatures, same draws, same results as ``_kernels.pyx``; only slower.
"""

from __future__ import annotations

import math

import numpy as np

POISSON_INVERSION_MAX = 10.0


def _poisson(gen: np.random.Generator, lam: float) -> int:
    if lam <= 0.0:
        return 0
    if lam > POISSON_INVERSION_MAX:
        return int(gen.poisson(lam))
    u = gen.random()
    p = math.exp(-lam)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p *= lam / k
        if p == 0.0:
            break
        cdf += p
    return k


def _rbb_step(eta: np.ndarray, gen: np.random.Generator) -> None:
    L = eta.shape[0]
    occupied = eta > 0
    eta[occupied] -= 1
    remaining = int(occupied.sum())
    for j in range(L):
        if remaining == 0:
            break
        if j == L - 1:
            b = remaining
        else:
            b = int(gen.binomial(remaining, 1.0 / (L - j)))
        eta[j] += b
        remaining -= b


def poisson(lam, generator):
    return _poisson(generator, float(lam))


def poisson_fill(lam, out, generator):
    for i in range(out.shape[0]):
        out[i] = _poisson(generator, float(lam))


def rbb_step_inplace(eta, generator):
    _rbb_step(eta, generator)


def rbb_simulate(eta, steps, generator, occupied, totals, track):
    m = track.shape[1]
    for t in range(steps + 1):
        if t > 0:
            _rbb_step(eta, generator)
        occupied[t] = np.count_nonzero(eta)
        totals[t] = eta.sum()
        track[t, :] = eta[:m]


def queue_trajectory(x0, rates, generator, out):
    x = int(x0)
    out[0] = x
    for t in range(rates.shape[0]):
        if x > 0:
            x -= 1
        x += _poisson(generator, float(rates[t]))
        out[t + 1] = x


def particles_step(states, rate, generator):
    for i in range(states.shape[0]):
        if states[i] > 0:
            states[i] -= 1
        states[i] += _poisson(generator, float(rate))


def coupled_draw(rho_t, r, generator):
    if r <= 0.0:
        return 0, 0
    m = _poisson(generator, float(r))
    p = rho_t / r
    n = 0
    for _ in range(m):
        if generator.random() < p:
            n += 1
    return n, m


def coupled_trajectory(x0, rho, r, generator, eta, zeta, thinned, arrivals):
    e = z = int(x0)
    eta[0] = e
    zeta[0] = z
    for t in range(rho.shape[0]):
        n, m = coupled_draw(float(rho[t]), r, generator)
        e = e - (e > 0) + n
        z = z - (z > 0) + m
        eta[t + 1] = e
        zeta[t + 1] = z
        thinned[t] = n
        arrivals[t] = m
