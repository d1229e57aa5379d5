"""Time each hot kernel under numba and under plain numpy.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The first numba call compiles (or loads the on-disk cache) and is excluded
from the timings.
"""
import argparse
import time

import numpy as np

from aptest.kernels import IMPLEMENTATIONS


def cases(rng):
    stream = rng.random(2_000_000)
    centers = rng.random(2000)
    X = rng.standard_normal((20000, 20))
    s = rng.choice([-1.0, 1.0], size=20000)
    P = 2_000_000
    I = rng.integers(0, 20000, size=P)
    J = rng.integers(0, 20000, size=P)
    Xs = X[:2000]
    pool = rng.integers(0, 2, size=(200, 4096), dtype=np.uint8)
    subsets = np.array([rng.choice(200, size=8, replace=False) for _ in range(500)])
    return {
        "scan_near": (stream, centers, 0.001, 10 ** 9, 0),
        "close_pairs": (stream, 0.001, 20000),
        "pair_values": (X, s, I, J, 22.7),
        "all_pairs": (Xs, s[:2000], 22.7),
        "column_violations": (pool, subsets, np.int64(6 * 4096), np.int64(5 * 256)),
    }


def timeit(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    args = cases(np.random.default_rng(a.seed))
    print(f"{'kernel':<20}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for name, (nb, npy) in IMPLEMENTATIONS.items():
        nb(*args[name])  # compile
        t_nb = timeit(nb, args[name], a.repeat)
        t_np = timeit(npy, args[name], a.repeat)
        print(f"{name:<20}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
