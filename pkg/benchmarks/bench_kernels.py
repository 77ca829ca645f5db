"""Compare the compiled kernels with the numpy/Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from amlgen import kernels


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n: int, rng: np.random.Generator):
    n_acc = max(10, n // 20)
    src = rng.integers(0, n_acc, n).astype(np.int64)
    dst = rng.integers(0, n_acc, n).astype(np.int64)
    u = rng.random((n, 8))
    bal0 = rng.integers(0, 200_000, n_acc).astype(np.int64)

    def settle(mod):
        return lambda: mod.settle_sampled(src, dst, u, bal0.copy(), 637.0, 300.0, 100, 15_000_000)

    key = np.sort(rng.integers(0, n // 10, n))
    vals = rng.random(n)
    order = np.lexsort((vals, key))
    vals_sorted = vals[order]
    starts = np.searchsorted(key[order], np.arange(n // 10 + 1)).astype(np.int64)

    def stats(mod):
        return lambda: mod.group_stats(starts, vals_sorted)

    x = np.sort(rng.normal(size=n))
    y = (rng.random(n) < 0.1).astype(np.int64)

    def split(mod):
        return lambda: mod.best_split(x, y, 5)

    cols = (rng.integers(0, 112, n).astype(np.int32), src.astype(np.int32),
            dst.astype(np.int32), rng.integers(100, 10**7, n).astype(np.int64),
            rng.integers(0, 2, n).astype(np.int8), rng.integers(0, 2, n).astype(np.int8),
            rng.integers(-1, 50, n).astype(np.int32), rng.integers(0, 12, n).astype(np.int32),
            rng.integers(0, 12, n).astype(np.int32))

    def fmt(mod):
        return lambda: mod.format_tx_csv(0, *cols)

    return {"settle_sampled": settle, "group_stats": stats, "best_split": split,
            "format_tx_csv": fmt}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled extension not built; only the fallback can run")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, make in cases(args.n, rng).items():
        t_py = _time(make(kernels.python_backend), args.repeat)
        if kernels.compiled_backend is not None:
            t_c = _time(make(kernels.compiled_backend), args.repeat)
            print(f"{name:<16}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>10.1f}")
        else:
            print(f"{name:<16}{t_py:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
