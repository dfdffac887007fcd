# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Each function mirrors one in ``_fallback.py`` draw for draw: both consume the
same numpy bit generator through the same sampling routines, so a seeded run
gives identical integers on either path.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport binomial_t, random_binomial, random_poisson

cdef double POISSON_INVERSION_MAX = 10.0


cdef bitgen_t* _bitgen(object generator) except NULL:
    capsule = generator.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("generator does not expose a BitGenerator capsule")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline int64_t _poisson(bitgen_t* bg, double lam) noexcept nogil:
    cdef double u, p, cdf
    cdef int64_t k = 0
    if lam <= 0.0:
        return 0
    if lam > POISSON_INVERSION_MAX:
        return random_poisson(bg, lam)
    u = bg.next_double(bg.state)
    p = exp(-lam)
    cdf = p
    while u > cdf:
        k += 1
        p *= lam / k
        if p == 0.0:
            break
        cdf += p
    return k


cdef inline void _rbb_step(int64_t[::1] eta, bitgen_t* bg, binomial_t* binom) noexcept nogil:
    cdef Py_ssize_t L = eta.shape[0]
    cdef Py_ssize_t j
    cdef int64_t remaining = 0
    cdef int64_t b
    for j in range(L):
        if eta[j] > 0:
            eta[j] -= 1
            remaining += 1
    for j in range(L):
        if remaining == 0:
            break
        if j == L - 1:
            b = remaining
        else:
            b = random_binomial(bg, 1.0 / (L - j), remaining, binom)
        eta[j] += b
        remaining -= b


def poisson(double lam, generator):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef int64_t k
    with generator.bit_generator.lock:
        k = _poisson(bg, lam)
    return k


def poisson_fill(double lam, int64_t[::1] out, generator):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef Py_ssize_t i
    with generator.bit_generator.lock, nogil:
        for i in range(out.shape[0]):
            out[i] = _poisson(bg, lam)


def rbb_step_inplace(int64_t[::1] eta, generator):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef binomial_t binom
    binom.has_binomial = 0
    with generator.bit_generator.lock, nogil:
        _rbb_step(eta, bg, &binom)


def rbb_simulate(int64_t[::1] eta, Py_ssize_t steps, generator,
                 int64_t[::1] occupied, int64_t[::1] totals, int64_t[:, ::1] track):
    """Advance ``eta`` in place for ``steps`` steps.

    ``occupied[t]`` receives the number of non-empty bins at time t,
    ``totals[t]`` the number of balls and ``track[t, :]`` the first
    ``track.shape[1]`` occupancies.
    """
    cdef bitgen_t* bg = _bitgen(generator)
    cdef binomial_t binom
    cdef Py_ssize_t L = eta.shape[0]
    cdef Py_ssize_t m = track.shape[1]
    cdef Py_ssize_t t, j
    cdef int64_t k, n
    binom.has_binomial = 0
    with generator.bit_generator.lock, nogil:
        for t in range(steps + 1):
            if t > 0:
                _rbb_step(eta, bg, &binom)
            k = 0
            n = 0
            for j in range(L):
                n += eta[j]
                if eta[j] > 0:
                    k += 1
            occupied[t] = k
            totals[t] = n
            for j in range(m):
                track[t, j] = eta[j]


def queue_trajectory(int64_t x0, double[::1] rates, generator, int64_t[::1] out):
    """Single-server queue with unit service and Poisson(rates[t]) arrivals."""
    cdef bitgen_t* bg = _bitgen(generator)
    cdef Py_ssize_t t
    cdef int64_t x = x0
    out[0] = x
    with generator.bit_generator.lock, nogil:
        for t in range(rates.shape[0]):
            if x > 0:
                x -= 1
            x += _poisson(bg, rates[t])
            out[t + 1] = x


def particles_step(int64_t[::1] states, double rate, generator):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef Py_ssize_t i
    with generator.bit_generator.lock, nogil:
        for i in range(states.shape[0]):
            if states[i] > 0:
                states[i] -= 1
            states[i] += _poisson(bg, rate)


cdef inline void _coupled_draw(bitgen_t* bg, double rho_t, double r,
                               int64_t* n_out, int64_t* m_out) noexcept nogil:
    cdef int64_t m, n, k
    cdef double p
    if r <= 0.0:
        n_out[0] = 0
        m_out[0] = 0
        return
    m = _poisson(bg, r)
    p = rho_t / r
    n = 0
    for k in range(m):
        if bg.next_double(bg.state) < p:
            n += 1
    n_out[0] = n
    m_out[0] = m


def coupled_draw(double rho_t, double r, generator):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef int64_t n, m
    with generator.bit_generator.lock:
        _coupled_draw(bg, rho_t, r, &n, &m)
    return n, m


def coupled_trajectory(int64_t x0, double[::1] rho, double r, generator,
                       int64_t[::1] eta, int64_t[::1] zeta,
                       int64_t[::1] thinned, int64_t[::1] arrivals):
    cdef bitgen_t* bg = _bitgen(generator)
    cdef Py_ssize_t t
    cdef int64_t n, m, e = x0, z = x0
    eta[0] = e
    zeta[0] = z
    with generator.bit_generator.lock, nogil:
        for t in range(rho.shape[0]):
            _coupled_draw(bg, rho[t], r, &n, &m)
            if e > 0:
                e -= 1
            if z > 0:
                z -= 1
            e += n
            z += m
            eta[t + 1] = e
            zeta[t + 1] = z
            thinned[t] = n
            arrivals[t] = m
