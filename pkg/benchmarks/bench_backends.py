#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_backends.py [--repeats N]

Times each kernel at several dimensions and two end-to-end training loops,
then prints one table per section with the speedup of the compiled backend.
"""

import argparse
import timeit

import numpy as np

from samkit import _kernels_py, backend
from samkit.optimizers import OptimizerSpec
from samkit.pipeline import RunConfig, run_serial
from samkit.problems import logistic_regression, toy_quadratic
from samkit.vecmath import Schedule

try:
    from samkit import _kernels as compiled
except ImportError:
    compiled = None


def time_call(fn, repeats):
    return min(timeit.repeat(fn, number=1000, repeat=repeats)) / 1000


def kernel_cases(dim, rng):
    x = rng.standard_normal(dim)
    v = rng.standard_normal(dim)
    g = rng.standard_normal(dim)
    m1 = 0.1 * rng.standard_normal(dim)
    m2 = np.abs(rng.standard_normal(dim)) * 0.01
    return [
        ("l2_norm", lambda k: k.l2_norm(g)),
        ("normalize_or_zero", lambda k: k.normalize_or_zero(g)),
        ("axpy", lambda k: k.axpy(0.1, g, x)),
        ("combine", lambda k: k.combine(0.8, g, 0.2, v)),
        ("sgd_momentum_step", lambda k: k.sgd_momentum_step(x, v, g, 0.1, 0.9, 5e-4)),
        ("adamw_step", lambda k: k.adamw_step(x, m1, m2, g, 0.01, 0.9, 0.999,
                                              1e-8, 0.01, 3)),
    ]


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20s} {'dim':>6s} {'python us':>10s} {'cython us':>10s} "
          f"{'speedup':>8s}")
    for dim in (2, 16, 64, 256, 1024):
        for name, fn in kernel_cases(dim, rng):
            t_py = time_call(lambda: fn(_kernels_py), repeats) * 1e6
            t_cy = time_call(lambda: fn(compiled), repeats) * 1e6
            print(f"{name:<20s} {dim:>6d} {t_py:>10.2f} {t_cy:>10.2f} "
                  f"{t_py / t_cy:>8.2f}x")


def bench_end_to_end(repeats):
    runs = [
        ("toy d=2, parallelizable scheme, T=2000",
         toy_quadratic(2),
         RunConfig(spec=OptimizerSpec("sampa", rho=0.1, lam=0.2),
                   schedule=Schedule("constant", eta0=0.05), T=2000, seed=0,
                   record_every=2000)),
        ("logistic n=500 d=20, batch 32, T=500",
         logistic_regression(500, 20, seed=1),
         RunConfig(spec=OptimizerSpec("sampa", rho=0.05, lam=0.2),
                   schedule=Schedule("cosine", eta0=0.5), T=500,
                   batch_size=32, seed=0, record_every=500)),
    ]
    print(f"\n{'end-to-end run':<42s} {'python s':>9s} {'cython s':>9s} "
          f"{'speedup':>8s}")
    for desc, oracle, cfg in runs:
        times = {}
        for name in ("python", "cython"):
            backend.set_backend(name)
            times[name] = min(
                timeit.repeat(lambda: run_serial(oracle, cfg), number=1,
                              repeat=repeats))
        print(f"{desc:<42s} {times['python']:>9.3f} {times['cython']:>9.3f} "
              f"{times['python'] / times['cython']:>8.2f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels not built; nothing to compare")
    original = backend.name()
    try:
        bench_kernels(args.repeats)
        bench_end_to_end(args.repeats)
    finally:
        backend.set_backend(original)


if __name__ == "__main__":
    main()
