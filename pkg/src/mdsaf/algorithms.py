"""Diffusion adaptation steps: MD-NMSAF and the comparison baselines.

Every algorithm follows the same synchronous adapt-then-combine schedule: all
nodes first compute an intermediate estimate psi from their own data plus an
inter-cluster consensus term, then every node convex-combines the psi vectors
of its intra-cluster neighbors.  Node k uses only its own data pairs in the
adapt step (the intra-cluster data-sharing weights are fixed to the identity).

These are the reference per-step implementations; long Monte-Carlo runs use
the equivalent whole-trial kernels in :mod:`mdsaf.kernels`, which are tested
against this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import CombinationWeights, Topology
from .robust import ThresholdState, init_threshold, phi_score, update_threshold

ALGORITHMS = ("md-nmsaf", "md-lms", "md-apa", "md-apm", "md-apmcc")


@dataclass
class StepConfig:
    """Adaptation parameters shared by all algorithms (unused fields ignored)."""

    mu: float
    eta: float = 0.0
    eps_reg: float = 1e-6
    n_d: int = 1                 # subband count (MD-NMSAF)
    p_order: int = 1             # projection order (AP family)
    sigma_mcc: float = 4.0       # correntropy kernel width (MD-APMCC)
    k_xi: float = 2.576
    thr_gamma: float = 0.99
    n_w: int = 5
    sigma0_sq: float = 1.0

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("step size must be >= 0")
        if self.eta < 0.0:
            raise ValueError("regularization strength must be >= 0")
        if self.eps_reg <= 0.0:
            raise ValueError("normalization regularizer must be > 0")


@dataclass
class NodeFilterState:
    """Weight vector, intermediate estimate, and per-subband threshold states."""

    w: np.ndarray
    psi: np.ndarray = None
    thresholds: list = field(default_factory=list)

    @classmethod
    def zeros(cls, m_taps: int, n_thresholds: int, cfg: StepConfig) -> "NodeFilterState":
        thr = [init_threshold(cfg.thr_gamma, cfg.k_xi, cfg.n_w, cfg.sigma0_sq)
               for _ in range(n_thresholds)]
        return cls(w=np.zeros(m_taps), psi=np.zeros(m_taps), thresholds=thr)


def _inter_cluster_term(states, k: int, gamma: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """mu * eta * sum_l gamma[k,l] (w_l - w_k); zero when the row is empty."""
    w_k = states[k].w
    acc = np.zeros_like(w_k)
    if cfg.eta == 0.0:
        return acc
    row = gamma[k]
    for l in np.nonzero(row)[0]:
        acc += row[l] * (states[l].w - w_k)
    return cfg.mu * cfg.eta * acc


def mdnmsaf_adapt(states, k: int, subband_data, gamma: np.ndarray,
                  cfg: StepConfig) -> np.ndarray:
    """One MD-NMSAF adapt step for node k.

    subband_data is a sequence of (d_iD, u_i) pairs, one per subband, where
    u_i is the M-vector regressor at the current decimated index.  Each
    subband error first refreshes its threshold state, then passes through
    the score gate; rejected subbands contribute nothing.
    """
    w_k = states[k].w
    psi = w_k.copy()
    for i, (d_i, u_i) in enumerate(subband_data):
        e = d_i - float(u_i @ w_k)
        _, xi = update_threshold(states[k].thresholds[i], e)
        score = phi_score(e, xi)
        if score != 0.0:
            psi += cfg.mu * score / (float(u_i @ u_i) + cfg.eps_reg) * u_i
    psi += _inter_cluster_term(states, k, gamma, cfg)
    states[k].psi = psi
    return psi


def mdlms_adapt(states, k: int, data, gamma: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """Fullband LMS gradient step plus the inter-cluster consensus term."""
    d, u = data
    w_k = states[k].w
    e = d - float(u @ w_k)
    psi = w_k + cfg.mu * e * u + _inter_cluster_term(states, k, gamma, cfg)
    states[k].psi = psi
    return psi


def _ap_solve(u_mat: np.ndarray, scored: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """mu * U (eps I + U^T U)^{-1} scored  with U of shape (M, P)."""
    p = u_mat.shape[1]
    gram = u_mat.T @ u_mat + cfg.eps_reg * np.eye(p)
    return cfg.mu * (u_mat @ np.linalg.solve(gram, scored))


def mdapa_adapt(states, k: int, block_data, gamma: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """Affine-projection step on the last P data pairs (no robustness)."""
    d_vec, u_mat = block_data
    e = d_vec - u_mat.T @ states[k].w
    psi = states[k].w + _ap_solve(u_mat, e, cfg) + _inter_cluster_term(states, k, gamma, cfg)
    states[k].psi = psi
    return psi


def mdapm_adapt(states, k: int, block_data, gamma: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """Robust AP step: errors gated elementwise by one fullband threshold state.

    The threshold is driven by the most recent a-priori error only, then the
    resulting xi gates all P error components.
    """
    d_vec, u_mat = block_data
    e = d_vec - u_mat.T @ states[k].w
    _, xi = update_threshold(states[k].thresholds[0], float(e[0]))
    scored = np.array([phi_score(float(ep), xi) for ep in e])
    psi = states[k].w + _ap_solve(u_mat, scored, cfg) + _inter_cluster_term(states, k, gamma, cfg)
    states[k].psi = psi
    return psi


def mdapmcc_adapt(states, k: int, block_data, gamma: np.ndarray, cfg: StepConfig) -> np.ndarray:
    """AP step with each error reweighted by the Gaussian correntropy kernel."""
    d_vec, u_mat = block_data
    e = d_vec - u_mat.T @ states[k].w
    weights = np.exp(-(e ** 2) / (2.0 * cfg.sigma_mcc ** 2))
    psi = states[k].w + _ap_solve(u_mat, weights * e, cfg) \
        + _inter_cluster_term(states, k, gamma, cfg)
    states[k].psi = psi
    return psi


def combine(psis, k: int, alpha: np.ndarray) -> np.ndarray:
    """w_k = sum_m alpha[m, k] psi_m over the intra-cluster neighborhood."""
    col = alpha[:, k]
    members = np.nonzero(col)[0]
    out = np.zeros_like(psis[members[0]])
    for m in members:
        out += col[m] * psis[m]
    return out


_ADAPT = {
    "md-nmsaf": mdnmsaf_adapt,
    "md-lms": mdlms_adapt,
    "md-apa": mdapa_adapt,
    "md-apm": mdapm_adapt,
    "md-apmcc": mdapmcc_adapt,
}


def run_iteration(topo: Topology, weights: CombinationWeights, algo: str,
                  node_data, cfg: StepConfig, states) -> list:
    """One synchronous network iteration: all adapt steps, then all combines.

    node_data[k] carries node k's data in the form the chosen algorithm's
    adapt step expects.  States are updated in place and returned.
    """
    if algo not in _ADAPT:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    adapt = _ADAPT[algo]
    psis = [adapt(states, k, node_data[k], weights.gamma, cfg) for k in range(topo.n_nodes)]
    for k in range(topo.n_nodes):
        states[k].w = combine(psis, k, weights.alpha)
    return states
