"""Per-trial data assembly and kernel dispatch for Monte-Carlo runs.

A RunPlan freezes everything a trial needs (topology arrays, bank, targets,
algorithm parameters); trials then differ only in their derived random
streams.  Seeds are spawned as SeedSequence(master, spawn_key=(trial, node,
role)) so adding trials or reordering execution never perturbs existing
streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .algorithms import StepConfig
from .filterbank import AnalysisBank, analyze
from .network import CombinationWeights, TargetSet, Topology
from .robust import c_factor
from .signals import InputModel, NoiseModel, gen_input, gen_noise

ROLE_INPUT = 0
ROLE_NOISE = 1
TARGET_KEY = 1 << 20
PILOT_TRIAL_BASE = 1 << 24

_AP_MODES = {"md-apa": kernels.AP_PLAIN, "md-apm": kernels.AP_M_ESTIMATE,
             "md-apmcc": kernels.AP_CORRENTROPY}


def neighbor_arrays(weights: CombinationWeights):
    """Pack the sparse alpha/gamma patterns into padded index/weight arrays."""
    alpha, gamma = weights.alpha, weights.gamma
    n = alpha.shape[0]
    intra = [np.nonzero(alpha[:, k])[0] for k in range(n)]
    inter = [np.nonzero(gamma[k])[0] for k in range(n)]
    max_intra = max(len(x) for x in intra)
    max_inter = max((len(x) for x in inter), default=0)
    intra_idx = np.zeros((n, max_intra), dtype=np.int64)
    intra_w = np.zeros((n, max_intra))
    intra_cnt = np.zeros(n, dtype=np.int64)
    inter_idx = np.zeros((n, max(max_inter, 1)), dtype=np.int64)
    inter_w = np.zeros((n, max(max_inter, 1)))
    inter_cnt = np.zeros(n, dtype=np.int64)
    for k in range(n):
        intra_cnt[k] = len(intra[k])
        intra_idx[k, : len(intra[k])] = intra[k]
        intra_w[k, : len(intra[k])] = alpha[intra[k], k]
        inter_cnt[k] = len(inter[k])
        inter_idx[k, : len(inter[k])] = inter[k]
        inter_w[k, : len(inter[k])] = gamma[k, inter[k]]
    return intra_idx, intra_cnt, intra_w, inter_idx, inter_cnt, inter_w


@dataclass
class RunPlan:
    """Immutable inputs of one Monte-Carlo experiment (shared by all trials)."""

    topo: Topology
    weights: CombinationWeights
    targets: TargetSet
    algo: str
    cfg: StepConfig
    input_model: InputModel
    noise_model: NoiseModel
    iterations: int
    master_seed: int
    m_taps: int
    bank: AnalysisBank = None
    flip_iter: int = -1

    def __post_init__(self):
        (self.intra_idx, self.intra_cnt, self.intra_w,
         self.inter_idx, self.inter_cnt, self.inter_w) = neighbor_arrays(self.weights)

    @property
    def hop(self) -> int:
        """Input samples consumed per iteration (N_D for subband, 1 for fullband)."""
        return self.bank.n_subbands if (self.algo == "md-nmsaf" and self.bank) else 1


def _node_streams(plan: RunPlan, trial: int, k: int, t_full: int):
    """Input and noise streams of node k for one trial (deterministic in seeds)."""
    ss_in = np.random.SeedSequence(plan.master_seed, spawn_key=(trial, k, ROLE_INPUT))
    ss_nz = np.random.SeedSequence(plan.master_seed, spawn_key=(trial, k, ROLE_NOISE))
    u = gen_input(plan.input_model, t_full, np.random.default_rng(ss_in), node=k,
                  burn=10 * plan.m_taps)
    v = gen_noise(plan.noise_model, t_full, ss_nz, node=k)
    return u, v


def _reference_with_flip(plan: RunPlan, u: np.ndarray, v: np.ndarray, k: int,
                         t_full: int) -> np.ndarray:
    clean = np.convolve(u, plan.targets.w_star[k])[:t_full]
    if plan.flip_iter >= 0:
        t_flip = plan.flip_iter * plan.hop
        if t_flip < t_full:
            clean[t_flip:] *= -1.0
    return clean + v


def run_trial(plan: RunPlan, trial: int, collect_pass: bool = False,
              tail_from: int = None):
    """Simulate one trial; returns (msd_linear, diverged, pass_freq_or_None)."""
    if plan.algo == "md-nmsaf":
        return _run_nmsaf_trial(plan, trial, collect_pass, tail_from)
    if plan.algo == "md-lms":
        return _run_lms_trial(plan, trial)
    if plan.algo in _AP_MODES:
        return _run_ap_trial(plan, trial)
    raise ValueError(f"unknown algorithm {plan.algo!r}")


def _run_nmsaf_trial(plan: RunPlan, trial: int, collect_pass: bool, tail_from):
    iters = plan.iterations
    n_d = plan.bank.n_subbands
    m = plan.m_taps
    t_full = (iters - 1) * n_d + 1
    n = plan.topo.n_nodes
    u_pad = np.zeros((n, n_d, m - 1 + t_full))
    d_dec = np.empty((n, n_d, iters))
    for k in range(n):
        u, v = _node_streams(plan, trial, k, t_full)
        d = _reference_with_flip(plan, u, v, k, t_full)
        u_pad[k, :, m - 1:] = analyze(u, plan.bank)
        d_dec[k] = analyze(d, plan.bank)[:, ::n_d]
    msd = np.empty(iters)
    pass_out = np.zeros((n, n_d), dtype=np.int64)
    if tail_from is None:
        tail_from = iters  # never counts unless requested
    cfg = plan.cfg
    diverged = kernels.nmsaf_trial_kernel(
        u_pad, d_dec, plan.targets.w_star, plan.flip_iter,
        cfg.mu, cfg.eta, cfg.eps_reg, cfg.k_xi, cfg.thr_gamma,
        c_factor(cfg.n_w), cfg.n_w, cfg.sigma0_sq,
        plan.intra_idx, plan.intra_cnt, plan.intra_w,
        plan.inter_idx, plan.inter_cnt, plan.inter_w,
        tail_from, msd, pass_out)
    freq = None
    if collect_pass and iters > tail_from:
        freq = pass_out / float(iters - tail_from)
    return msd, bool(diverged), freq


def _fullband_data(plan: RunPlan, trial: int):
    iters = plan.iterations
    m = plan.m_taps
    n = plan.topo.n_nodes
    u_pad = np.zeros((n, iters + m - 1))
    d = np.empty((n, iters))
    for k in range(n):
        u, v = _node_streams(plan, trial, k, iters)
        u_pad[k, m - 1:] = u
        d[k] = _reference_with_flip(plan, u, v, k, iters)
    return u_pad, d


def _run_lms_trial(plan: RunPlan, trial: int):
    u_pad, d = _fullband_data(plan, trial)
    msd = np.empty(plan.iterations)
    diverged = kernels.lms_trial_kernel(
        u_pad, d, plan.targets.w_star, plan.flip_iter, plan.cfg.mu, plan.cfg.eta,
        plan.intra_idx, plan.intra_cnt, plan.intra_w,
        plan.inter_idx, plan.inter_cnt, plan.inter_w, msd)
    return msd, bool(diverged), None


def _run_ap_trial(plan: RunPlan, trial: int):
    u_pad, d = _fullband_data(plan, trial)
    p = plan.cfg.p_order
    d_pad = np.zeros((d.shape[0], plan.iterations + p - 1))
    d_pad[:, p - 1:] = d
    msd = np.empty(plan.iterations)
    cfg = plan.cfg
    diverged = kernels.ap_trial_kernel(
        u_pad, d_pad, plan.targets.w_star, plan.flip_iter,
        _AP_MODES[plan.algo], p, cfg.sigma_mcc,
        cfg.mu, cfg.eta, cfg.eps_reg, cfg.k_xi, cfg.thr_gamma,
        c_factor(cfg.n_w), cfg.n_w, cfg.sigma0_sq,
        plan.intra_idx, plan.intra_cnt, plan.intra_w,
        plan.inter_idx, plan.inter_cnt, plan.inter_w, msd)
    return msd, bool(diverged), None


def raw_streams(plan: RunPlan, trial: int):
    """Raw (u, v, d) per node for debugging dumps; mirrors run_trial's data."""
    t_full = (plan.iterations - 1) * plan.hop + 1 if plan.algo == "md-nmsaf" \
        else plan.iterations
    out = []
    for k in range(plan.topo.n_nodes):
        u, v = _node_streams(plan, trial, k, t_full)
        d = _reference_with_flip(plan, u, v, k, t_full)
        out.append((u, v, d))
    return out
