"""Compiled vs pure-Python Polya-Gamma kernels, plus a sweep-level timing.

Usage: python3 benchmarks/bench_pg.py [--draws N] [--repeat R]
"""
import argparse
import time

import numpy as np

from bnpma import polya_gamma as pg
from bnpma.gibbs import NodeSampler
from bnpma.simulate import SimConfig, generate
from bnpma import BNPMAModel, CenteringMeasure


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernel(n_draws, repeat):
    # shapes and tilts typical of a root node with 25 studies
    rng = np.random.default_rng(0)
    b = rng.integers(20, 120, size=n_draws)
    c = rng.normal(0.0, 1.5, size=n_draws)
    out = {}
    for backend in ("compiled", "python"):
        if backend == "compiled" and pg.BACKEND != "compiled":
            continue
        fn = lambda: pg.sample_pg_many(b, c, np.random.default_rng(1), backend=backend)
        out[backend] = best_of(fn, repeat)
    fast = pg.sample_pg_many(b, c, np.random.default_rng(1))[0]
    slow = pg.sample_pg_many(b, c, np.random.default_rng(1), backend="python")[0]
    return out, bool(np.array_equal(fast, slow)), int(b.sum())


def bench_sweep(n_sweeps):
    cohorts, _ = generate(SimConfig(S=25, n=60, seed=0))
    model = BNPMAModel(cohorts, CenteringMeasure.from_medians([c.median for c in cohorts]))
    sampler = NodeSampler(model.nodes[0], np.random.default_rng(0))
    t = time.perf_counter()
    for _ in range(n_sweeps):
        sampler.sweep()
    return (time.perf_counter() - t) / n_sweeps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--draws", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sweeps", type=int, default=300)
    args = ap.parse_args()
    times, identical, total_b = bench_kernel(args.draws, args.repeat)
    print(f"PG kernel: {args.draws} draws, sum(b) = {total_b}")
    for name, secs in times.items():
        print(f"  {name:9s} {secs * 1e3:9.2f} ms  ({secs / total_b * 1e9:7.1f} ns per PG(1,c))")
    if "compiled" in times:
        print(f"  speedup   {times['python'] / times['compiled']:9.1f}x")
    print(f"  identical draws across backends: {identical}")
    per = bench_sweep(args.sweeps)
    print(f"root-node sweep, 25 studies / 50 cohorts, backend {pg.BACKEND}: {per * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
