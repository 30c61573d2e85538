#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the pure-Python fallback.

Times the two hot entry points (fk_jacobian, batch_eval) on the default
6R + placement milling scenario and prints a speedup table.

Usage: python benchmarks/bench_kernels.py [--waypoints N] [--repeats R]
"""

import argparse
import time

import numpy as np

from codesign.costs import CostWeights
from codesign.kernels import get_backend
from codesign.harness import default_chain
from codesign.toolpath import figure_eight


def bench(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--waypoints", type=int, default=80)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    chain = default_chain()
    packed = chain.packed()
    path = figure_eight(n=args.waypoints)
    weights = CostWeights()
    rng = np.random.default_rng(0)

    N = len(path)
    states = rng.uniform(-1, 1, (N, chain.n_moving))
    qd = rng.uniform(0.1, 0.6, chain.n_design)
    st, sz = path.positions, path.axes
    F = weights.alpha_force * path.tangents / np.linalg.norm(
        path.tangents, axis=1, keepdims=True)
    kinv = np.ones(chain.n_moving)
    tau = np.gradient(path.times)
    q = chain.assemble(states[0], qd)

    backends = {}
    for name in ("python", "native"):
        try:
            backends[name] = get_backend(name)
        except ImportError:
            print(f"backend {name!r} unavailable, skipping")

    results = {}
    for name, be in backends.items():
        t_jac = bench(lambda: be.fk_jacobian(packed, q), args.repeats * 10)
        t_batch = bench(
            lambda: be.batch_eval(packed, states, qd, st, sz, F, kinv, tau, tau, True),
            args.repeats)
        results[name] = (t_jac, t_batch)
        print(f"{name:>8}:  fk_jacobian {t_jac * 1e6:9.2f} us   "
              f"batch_eval[{N}] {t_batch * 1e3:9.3f} ms")

    if len(results) == 2:
        py, na = results["python"], results["native"]
        print(f"{'speedup':>8}:  fk_jacobian {py[0] / na[0]:8.1f} x    "
              f"batch_eval {py[1] / na[1]:10.1f} x")


if __name__ == "__main__":
    main()
