"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--rows N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from augpu import kernels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.compiled is None:
        print("compiled extension not built; nothing to compare")
        return
    n, p = args.rows, 22
    y = np.linspace(0.001, 0.999, n)
    s = y * 0.4
    u = kernels.fallback.uniform_block(7, 0, n, 1, 0, 1)[:, 0]

    cases = {
        "uniform_block": lambda m: m.uniform_block(7, 0, n, p, 0, p),
        "normal_block": lambda m: m.normal_block(7, 0, n, p, 2, p - 2),
        "risk_terms": lambda m: m.risk_terms(y, s, u),
    }
    print(f"{'kernel':<14} {'python [ms]':>12} {'compiled [ms]':>14} {'speedup':>8}  identical")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(kernels.fallback), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: fn(kernels.compiled), number=1, repeat=args.repeat))
        same = np.array_equal(fn(kernels.fallback), fn(kernels.compiled))
        print(f"{name:<14} {1e3 * t_py:>12.1f} {1e3 * t_c:>14.1f} {t_py / t_c:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
