"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends consume the same random stream and return identical arrays;
the script checks that before reporting timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rbbchaos.kernels import BACKENDS


def _gen(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rbb(k, L=1000, steps=200):
    eta = np.zeros(L, np.int64)
    eta[: L // 2] = 1
    occ = np.empty(steps + 1, np.int64)
    tot = np.empty(steps + 1, np.int64)
    tr = np.empty((steps + 1, 2), np.int64)
    k.rbb_simulate(eta, steps, _gen(1), occ, tot, tr)
    return occ


def queue(k, steps=200_000):
    out = np.empty(steps + 1, np.int64)
    k.queue_trajectory(0, np.full(steps, 0.7), _gen(2), out)
    return out


def coupled(k, steps=200_000):
    arrays = [np.empty(steps + 1, np.int64), np.empty(steps + 1, np.int64),
              np.empty(steps, np.int64), np.empty(steps, np.int64)]
    k.coupled_trajectory(0, np.full(steps, 0.5), 0.8, _gen(3), *arrays)
    return arrays[0]


CASES = {
    "rbb_simulate L=1000 T=200": rbb,
    "queue_trajectory T=2e5": queue,
    "coupled_trajectory T=2e5": coupled,
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if "compiled" not in BACKENDS:
        raise SystemExit("compiled extension is not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<28}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for name, case in CASES.items():
        tc, rc = best_of(lambda: case(BACKENDS["compiled"]), args.repeat)
        tp, rp = best_of(lambda: case(BACKENDS["python"]), args.repeat)
        if not np.array_equal(rc, rp):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<28}{tc:>14.4f}{tp:>14.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
