#!/usr/bin/env python3
"""Benchmark the compiled core against the pure-Python fallback.

Two workloads, matching where the library actually spends time:

* tape evaluation: metric-component values + first derivatives over a batch
  of sample points (the kernel behind residual sampling);
* geodesic RK4: a batch of shots on the n = 3 family metric (each step
  assembles the metric jet four times and solves for the acceleration).

Usage: python benchmarks/bench_cores.py [--shots 20] [--steps 2000] [--points 2000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from projeq import core
from projeq.charts import sample_points
from projeq.scenarios import build_levi_civita_family


def time_call(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--shots", type=int, default=20)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--points", type=int, default=2000)
    args = ap.parse_args()

    backends = core.available_backends()
    if backends == ("pure",):
        print("compiled core not built; benchmarking the pure core only")

    sc = build_levi_civita_family(3)
    g = sc.g
    chart = g.chart
    pts = sample_points(chart, args.points, seed=0)
    P = sample_points(chart, args.shots, seed=101)
    rng = np.random.default_rng(7)
    V = rng.normal(size=(args.shots, chart.dim))
    V /= np.linalg.norm(V, axis=1)[:, None]

    rows = []
    for name in backends:
        impl = core.get_backend(name)
        t_eval = time_call(lambda: core.eval_program(g.program, pts, want_grad=True, impl=impl))
        t_rk4 = time_call(
            lambda: core.rk4_geodesic(g.program, P, V, 1e-3, args.steps, chart.periodic_mask,
                                      chart.lo, chart.hi, 1e-6, impl=impl),
            repeat=1,
        )
        rows.append((name, t_eval, t_rk4))

    print(f"\nworkload: {args.points} jet points; {args.shots} shots x {args.steps} RK4 steps (n=3)")
    print(f"{'backend':<10} {'tape eval':>12} {'geodesic RK4':>14}")
    for name, t_eval, t_rk4 in rows:
        print(f"{name:<10} {t_eval * 1e3:>10.1f}ms {t_rk4:>12.2f}s")
    if len(rows) == 2:
        print(f"{'speedup':<10} {rows[1][1] / rows[0][1]:>11.1f}x {rows[1][2] / rows[0][2]:>11.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
