#!/usr/bin/env python3
"""Benchmark the compiled agglomeration kernel against the pure-Python
fallback across problem sizes, and report one representative full-round cost.

Run:
    python benchmarks/bench_clustering.py
"""

import time

import numpy as np

from airfed import _linkage_py
from airfed.clustering import pairwise_distances

try:
    from airfed import _linkage_cy
except ImportError:
    _linkage_cy = None


def time_kernel(kernel, dist, imps, rho, n_clusters, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        kernel.agglomerate(dist, imps, rho, n_clusters)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"{'K':>4} {'N':>3} {'python':>12} {'cython':>12} {'speedup':>8}")
    for k in (10, 20, 50, 100, 150):
        n = max(2, k // 10)
        pos = rng.uniform(0, 200, size=(k, 2))
        dist = np.ascontiguousarray(pairwise_distances(pos))
        imps = rng.uniform(0, 2.3, size=k)
        repeats = 3 if k >= 100 else 5
        t_py = time_kernel(_linkage_py, dist, imps, 30.0, n, repeats)
        if _linkage_cy is None:
            print(f"{k:>4} {n:>3} {t_py * 1e3:>10.2f}ms {'n/a':>12} {'n/a':>8}")
            continue
        t_cy = time_kernel(_linkage_cy, dist, imps, 30.0, n, repeats)
        lab_py, _ = _linkage_py.agglomerate(dist, imps, 30.0, n)
        lab_cy, _ = _linkage_cy.agglomerate(dist, imps, 30.0, n)
        assert np.array_equal(lab_py, lab_cy), "kernel outputs diverged"
        print(f"{k:>4} {n:>3} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.2f}ms "
              f"{t_py / t_cy:>7.1f}x")

    # context: one full training round at the default experiment size
    from airfed.config import ExperimentConfig
    from airfed.harness import Experiment

    cfg = ExperimentConfig(rounds=0, seed=0)
    exp = Experiment(cfg)
    start = time.perf_counter()
    for t in range(1, 11):
        exp.run_round(t)
    per_round = (time.perf_counter() - start) / 10
    print(f"\nfull default round (K=50, N=5): {per_round * 1e3:.1f} ms "
          f"with the '{'cython' if _linkage_cy else 'python'}' kernel")


if __name__ == "__main__":
    main()
