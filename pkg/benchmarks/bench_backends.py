#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times one Monte-Carlo trial of each algorithm variant on the two built-in
scenarios and reports per-trial wall time plus the implied cost of the
full acceptance-scale runs.

Usage: python benchmarks/bench_backends.py [--trials N]
"""

import argparse
import time

import numpy as np

import distkf
from distkf import _kernels
from distkf.decomposition import psd_factor


def trial_inputs(sc, designs, horizon, variant):
    rng = np.random.default_rng(0)
    model = sc.model
    n, m = model.n, model.m
    Lq, Lr = psd_factor(model.Q), psd_factor(model.R)
    w = rng.standard_normal((horizon, n)) @ Lq.T
    v = rng.standard_normal((horizon + 1, m)) @ Lr.T
    x0 = np.zeros(n)
    gains = distkf.static_strategy().sample_gains(designs.graph.adjacency, horizon, 1)
    if variant == "alg1":
        blocks = designs.bundle.F
    else:
        blocks = np.stack([designs.reduced.T_blocks(i) for i in range(m)])
    return (
        model.A, model.C, designs.kalman.Acl, designs.kalman.K,
        designs.bundle.S, designs.bundle.beta, blocks,
        designs.consensus.Gamma, gains, w, v[0], v[1:], x0,
        sc.replace_own and variant == "alg1", 1,
    )


def time_kernel(fn, args, repeats):
    fn(*args)  # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()

    if not _kernels.USING_NUMBA:
        raise SystemExit(
            "run without DISTKF_BACKEND=numpy: the benchmark needs the "
            "compiled kernels importable"
        )

    cases = []
    sc1 = distkf.example1_scenario()
    d1 = distkf.design_pipeline(sc1.model, sc1.graph, zeta=sc1.zeta, variant=sc1.variant)
    cases.append(("ring n=2 m=4, alg2, T=100", sc1, d1, 100, "alg2",
                  _kernels.sim_alg2, _kernels._sim_alg2_numpy, 5000))
    cases.append(("ring n=2 m=4, alg1, T=100", sc1, d1, 100, "alg1",
                  _kernels.sim_alg1, _kernels._sim_alg1_numpy, 5000))
    sc2 = distkf.example2_scenario()
    d2 = distkf.design_pipeline(sc2.model, sc2.graph, zeta=sc2.zeta, variant=sc2.variant)
    cases.append(("heat n=25 m=15, alg1, T=200", sc2, d2, 200, "alg1",
                  _kernels.sim_alg1, _kernels._sim_alg1_numpy, 2000))

    print(f"{'case':34s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s} {'MC est (numba)':>15s}")
    for name, sc, designs, horizon, variant, jit_fn, np_fn, mc_trials in cases:
        inputs = trial_inputs(sc, designs, horizon, variant)
        t_jit = time_kernel(jit_fn, inputs, args.repeats)
        t_np = time_kernel(np_fn, inputs, max(3, args.repeats // 5))
        print(
            f"{name:34s} {t_jit * 1e3:8.2f}ms {t_np * 1e3:8.2f}ms "
            f"{t_np / t_jit:7.1f}x {mc_trials} trials ~ {mc_trials * t_jit:5.1f}s"
        )


if __name__ == "__main__":
    main()
