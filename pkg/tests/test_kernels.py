"""Whole-trial kernels vs the reference step implementations, and the
numba/pure-Python fallback path (same source, .py_func)."""

import numpy as np
import pytest

from mdsaf import kernels
from mdsaf.algorithms import NodeFilterState, StepConfig, run_iteration
from mdsaf.filterbank import design_bank
from mdsaf.harness import empirical_msd
from mdsaf.network import build_topology, combination_weights, generate_targets
from mdsaf.signals import InputModel, NoiseModel
from mdsaf.simulate import (RunPlan, _fullband_data, _node_streams,
                            _reference_with_flip, run_trial)

ITERS = 60


def _small_plan(algo, n_d=2, m=4, mu=0.2, eta=0.05, p_order=2, flip=-1):
    topo = build_topology([(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (1, 4)],
                          [0, 0, 0, 1, 1])
    weights = combination_weights(topo)
    targets = generate_targets(topo, m, [0.02, -0.04], seed=3)
    cfg = StepConfig(mu=mu, eta=eta, eps_reg=1e-6, n_d=n_d, p_order=p_order,
                     sigma_mcc=2.0)
    bank = design_bank(n_d) if algo == "md-nmsaf" else None
    return RunPlan(topo=topo, weights=weights, targets=targets, algo=algo, cfg=cfg,
                   input_model=InputModel(kind="ar1", sigma_delta_sq=np.full(5, 0.8),
                                          beta1=0.6),
                   noise_model=NoiseModel(sigma_g_sq=np.full(5, 0.3), p_r=0.02,
                                          kappa=100.0),
                   iterations=ITERS, master_seed=99, m_taps=m, bank=bank,
                   flip_iter=flip)


def _nmsaf_reference_curve(plan):
    n, m, n_d = plan.topo.n_nodes, plan.m_taps, plan.bank.n_subbands
    t_full = (plan.iterations - 1) * n_d + 1
    from mdsaf.filterbank import analyze
    u_pad = np.zeros((n, n_d, m - 1 + t_full))
    d_dec = np.empty((n, n_d, plan.iterations))
    for k in range(n):
        u, v = _node_streams(plan, 0, k, t_full)
        d = _reference_with_flip(plan, u, v, k, t_full)
        u_pad[k, :, m - 1:] = analyze(u, plan.bank)
        d_dec[k] = analyze(d, plan.bank)[:, ::n_d]
    states = [NodeFilterState.zeros(m, n_d, plan.cfg) for _ in range(n)]
    msd = np.empty(plan.iterations)
    for it in range(plan.iterations):
        w = np.stack([s.w for s in states])
        sign = -1.0 if (plan.flip_iter >= 0 and it >= plan.flip_iter) else 1.0
        msd[it] = empirical_msd(w, sign * plan.targets.w_star)
        base = it * n_d + m - 1
        data = []
        for k in range(n):
            pairs = [(d_dec[k, i, it], u_pad[k, i, base - m + 1: base + 1][::-1].copy())
                     for i in range(n_d)]
            data.append(pairs)
        run_iteration(plan.topo, plan.weights, "md-nmsaf", data, plan.cfg, states)
    return msd


def test_nmsaf_kernel_matches_reference():
    plan = _small_plan("md-nmsaf")
    msd_kernel, diverged, _ = run_trial(plan, 0)
    assert not diverged
    msd_ref = _nmsaf_reference_curve(plan)
    np.testing.assert_allclose(msd_kernel, msd_ref, rtol=1e-12, atol=1e-14)


def _fullband_reference_curve(plan):
    n, m = plan.topo.n_nodes, plan.m_taps
    u_pad, d = _fullband_data(plan, 0)
    p = plan.cfg.p_order
    states = [NodeFilterState.zeros(m, 1, plan.cfg) for _ in range(n)]
    msd = np.empty(plan.iterations)
    for it in range(plan.iterations):
        w = np.stack([s.w for s in states])
        msd[it] = empirical_msd(w, plan.targets.w_star)
        data = []
        for k in range(n):
            if plan.algo == "md-lms":
                base = it + m - 1
                data.append((d[k, it], u_pad[k, base - m + 1: base + 1][::-1].copy()))
            else:
                u_mat = np.zeros((m, p))
                d_vec = np.zeros(p)
                for lag in range(p):
                    t = it - lag
                    if t < 0:
                        continue
                    base = t + m - 1
                    u_mat[:, lag] = u_pad[k, base - m + 1: base + 1][::-1]
                    d_vec[lag] = d[k, t]
                data.append((d_vec, u_mat))
        run_iteration(plan.topo, plan.weights, plan.algo, data, plan.cfg, states)
    return msd


@pytest.mark.parametrize("algo", ["md-lms", "md-apa", "md-apm", "md-apmcc"])
def test_fullband_kernels_match_reference(algo):
    mu = 0.02 if algo == "md-lms" else 0.2
    plan = _small_plan(algo, mu=mu)
    msd_kernel, diverged, _ = run_trial(plan, 0)
    assert not diverged
    msd_ref = _fullband_reference_curve(plan)
    np.testing.assert_allclose(msd_kernel, msd_ref, rtol=1e-12, atol=1e-14)


def test_tracking_flip_consistency():
    plan = _small_plan("md-nmsaf", flip=ITERS // 2)
    msd, diverged, _ = run_trial(plan, 0)
    msd_ref = _nmsaf_reference_curve(plan)
    np.testing.assert_allclose(msd, msd_ref, rtol=1e-12, atol=1e-14)
    # the flip shows up as a jump at the flip iteration
    assert msd[ITERS // 2] > 10 * msd[ITERS // 2 - 1]


def test_pure_python_fallback_identical():
    # same kernel source executed without numba must give identical output
    plan = _small_plan("md-nmsaf", n_d=2, m=3)
    msd_jit, _, _ = run_trial(plan, 0)
    from mdsaf.filterbank import analyze
    from mdsaf.robust import c_factor
    n, m, n_d = plan.topo.n_nodes, plan.m_taps, 2
    t_full = (plan.iterations - 1) * n_d + 1
    u_pad = np.zeros((n, n_d, m - 1 + t_full))
    d_dec = np.empty((n, n_d, plan.iterations))
    for k in range(n):
        u, v = _node_streams(plan, 0, k, t_full)
        d = _reference_with_flip(plan, u, v, k, t_full)
        u_pad[k, :, m - 1:] = analyze(u, plan.bank)
        d_dec[k] = analyze(d, plan.bank)[:, ::n_d]
    msd_py = np.empty(plan.iterations)
    pass_out = np.zeros((n, n_d), dtype=np.int64)
    cfg = plan.cfg
    kern = getattr(kernels.nmsaf_trial_kernel, "py_func", kernels.nmsaf_trial_kernel)
    kern(u_pad, d_dec, plan.targets.w_star, plan.flip_iter,
         cfg.mu, cfg.eta, cfg.eps_reg, cfg.k_xi, cfg.thr_gamma,
         c_factor(cfg.n_w), cfg.n_w, cfg.sigma0_sq,
         plan.intra_idx, plan.intra_cnt, plan.intra_w,
         plan.inter_idx, plan.inter_cnt, plan.inter_w,
         plan.iterations, msd_py, pass_out)
    np.testing.assert_array_equal(msd_jit, msd_py)


def test_divergence_cap_and_flag():
    # unnormalized LMS with a huge step blows up and must flag, not crash
    plan = _small_plan("md-lms", mu=5.0)
    msd, diverged, _ = run_trial(plan, 0)
    assert diverged
    assert np.all(np.isfinite(msd))
    assert msd.max() == kernels.DIVERGENCE_CAP


def test_pass_counting():
    plan = _small_plan("md-nmsaf")
    _, _, freq = run_trial(plan, 0, collect_pass=True, tail_from=ITERS // 2)
    assert freq.shape == (5, 2)
    assert np.all(freq >= 0.0) and np.all(freq <= 1.0)
    assert freq.mean() > 0.5  # most clean errors pass the gate
