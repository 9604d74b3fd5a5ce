#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times fit_all on a seeded synthetic dataset under both backends and prints a
small table. The first numba call includes JIT compilation; a warm-up run is
timed separately so the steady-state comparison is fair.

Usage: python benchmarks/bench_backends.py [--n 1200] [--k 50] [--repeats 3]
"""

import argparse
import time

import numpy as np

from gimbal import GimbalConfig, SimSpec, fit_all, generate
from gimbal import kernels


def time_fit(dataset, config, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fit_all(dataset, config)
        times.append(time.perf_counter() - start)
    return min(times), sum(times) / len(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1200)
    parser.add_argument("--k", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    dataset, _ = generate(SimSpec(n=args.n, seed=args.seed))
    config = GimbalConfig(k=args.k)
    print(f"dataset: n={args.n}, K={args.k}, backends={kernels.available_backends()}")

    results = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        warmup = time.perf_counter()
        records = fit_all(dataset, config)
        warmup = time.perf_counter() - warmup
        best, mean = time_fit(dataset, config, args.repeats)
        results[backend] = (warmup, best, mean, records)
        print(f"{backend:>6}: warmup {warmup:7.3f}s   best {best:7.3f}s   "
              f"mean {mean:7.3f}s over {args.repeats} runs")

    if len(results) == 2:
        speedup = results["numpy"][1] / results["numba"][1]
        print(f"speedup (numpy best / numba best): {speedup:.1f}x")
        wa = np.concatenate([r.weight_map.weights for r in results["numpy"][3]])
        wb = np.concatenate([r.weight_map.weights for r in results["numba"][3]])
        print(f"max |weight difference| across paths: {np.max(np.abs(wa - wb)):.2e}")


if __name__ == "__main__":
    main()
