#!/usr/bin/env python3
"""Benchmark the numba-compiled trial kernels against the pure-Python fallback.

The fallback executes the identical kernel source without JIT (what you get
with MDSAF_DISABLE_NUMBA=1), so the speedup factor printed here is the cost
of disabling numba.  Workload: one MD-NMSAF trial and one MD-APM trial on the
N=7 preset at a reduced iteration count.

Usage: python benchmarks/bench_kernels.py [--iterations 2000]
"""

import argparse
import time

import numpy as np

from mdsaf import kernels
from mdsaf._accel import NUMBA_ENABLED
from mdsaf.filterbank import analyze
from mdsaf.harness import base_n7_config, build_plan
from mdsaf.robust import c_factor
from mdsaf.simulate import _node_streams, _reference_with_flip


def _nmsaf_args(plan):
    n, m, n_d = plan.topo.n_nodes, plan.m_taps, plan.bank.n_subbands
    t_full = (plan.iterations - 1) * n_d + 1
    u_pad = np.zeros((n, n_d, m - 1 + t_full))
    d_dec = np.empty((n, n_d, plan.iterations))
    for k in range(n):
        u, v = _node_streams(plan, 0, k, t_full)
        d = _reference_with_flip(plan, u, v, k, t_full)
        u_pad[k, :, m - 1:] = analyze(u, plan.bank)
        d_dec[k] = analyze(d, plan.bank)[:, ::n_d]
    cfg = plan.cfg
    return (u_pad, d_dec, plan.targets.w_star, plan.flip_iter,
            cfg.mu, cfg.eta, cfg.eps_reg, cfg.k_xi, cfg.thr_gamma,
            c_factor(cfg.n_w), cfg.n_w, cfg.sigma0_sq,
            plan.intra_idx, plan.intra_cnt, plan.intra_w,
            plan.inter_idx, plan.inter_cnt, plan.inter_w,
            plan.iterations)


def _time(func, args, out_shape, repeats):
    best = np.inf
    for _ in range(repeats):
        msd = np.empty(out_shape)
        pass_out = np.zeros((args[0].shape[0], args[0].shape[1]), dtype=np.int64)
        t0 = time.perf_counter()
        func(*args, msd, pass_out)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    opts = ap.parse_args()

    cfg = base_n7_config("white", n_d=4, iterations=opts.iterations, trials=1)
    plan = build_plan(cfg)
    args = _nmsaf_args(plan)

    jit = kernels.nmsaf_trial_kernel
    py = getattr(jit, "py_func", jit)
    if not NUMBA_ENABLED:
        print("numba disabled or missing: timing the fallback only")
        t_py = _time(py, args, opts.iterations, 1)
        print(f"pure-python : {t_py * 1e3:9.1f} ms / trial")
        return

    jit(*args, np.empty(opts.iterations), np.zeros((7, 4), dtype=np.int64))  # compile
    t_jit = _time(jit, args, opts.iterations, opts.repeats)
    t_py = _time(py, args, opts.iterations, 1)
    print(f"MD-NMSAF trial kernel, N=7, N_D=4, M=8, {opts.iterations} iterations")
    print(f"numba       : {t_jit * 1e3:9.1f} ms / trial")
    print(f"pure-python : {t_py * 1e3:9.1f} ms / trial")
    print(f"speedup     : {t_py / t_jit:9.1f}x")


if __name__ == "__main__":
    main()
