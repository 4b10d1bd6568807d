#!/usr/bin/env python3
"""Benchmark the compiled vs numpy kernel-matrix backends.

Times rbadapt.rbf._kernels_cy against rbadapt.rbf._kernels_np over a grid of
center counts and dimensions, checks that both produce identical matrices,
and prints one table row per case with the speedup ratio.

Usage:
    python benchmarks/bench_rbf_backends.py [--sizes 100 400 1600] [--dims 1 3]
                                            [--repeats 5]
"""

import argparse
import time

import numpy as np

from rbadapt.rbf import BACKEND
from rbadapt.rbf import _kernels_np
from rbadapt.rbf._kernels_np import GAUSSIAN, IMQ, MQ, TPS

try:
    from rbadapt.rbf import _kernels_cy
except ImportError:
    _kernels_cy = None

KERNELS = [("gaussian", GAUSSIAN, 2.0), ("tps", TPS, 0.0),
           ("mq", MQ, 0.5), ("imq", IMQ, 0.5)]


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1600])
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 3])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"active package backend: {BACKEND}")
    if _kernels_cy is None:
        print("compiled extension not built; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    header = f"{'kernel':8s} {'n':>6s} {'d':>2s} {'numpy_ms':>10s} {'cython_ms':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, code, sigma in KERNELS:
        for n in args.sizes:
            for d in args.dims:
                A = rng.random((n, d))
                B = rng.random((n, d))
                K_np = _kernels_np.kernel_matrix(A, B, code, sigma)
                K_cy = _kernels_cy.kernel_matrix(A, B, code, sigma)
                if not np.allclose(K_np, K_cy, rtol=1e-13, atol=1e-13):
                    raise SystemExit(f"backend mismatch for {name} n={n} d={d}")
                t_np = _time(lambda: _kernels_np.kernel_matrix(A, B, code, sigma),
                             args.repeats)
                t_cy = _time(lambda: _kernels_cy.kernel_matrix(A, B, code, sigma),
                             args.repeats)
                print(f"{name:8s} {n:6d} {d:2d} {t_np * 1e3:10.3f} "
                      f"{t_cy * 1e3:10.3f} {t_np / t_cy:8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
