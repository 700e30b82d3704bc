"""Modified Huber M-estimate machinery with a median-based adaptive threshold.

The score function passes small errors through unchanged and zeroes errors at
or beyond a time-varying threshold xi = k_xi * sigma, where sigma^2 tracks
the impulse-free error power through an exponentially smoothed, finite-sample
corrected median of recent squared errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def c_factor(n_w: int) -> float:
    """Finite-sample correction 1.483 * (1 + 5/(N_w - 1)) for the median estimator."""
    if n_w < 2:
        raise ValueError("window length must be >= 2")
    return 1.483 * (1.0 + 5.0 / (n_w - 1))


def huber_cost(e: float, xi: float) -> float:
    """Modified Huber cost: e^2/2 inside the threshold, xi^2/2 outside.

    The tie |e| == xi belongs to the clipped branch.
    """
    if abs(e) < xi:
        return 0.5 * e * e
    return 0.5 * xi * xi


def phi_score(e: float, xi: float) -> float:
    """Score (cost derivative off the corner): e inside the threshold, else 0."""
    if abs(e) < xi:
        return e
    return 0.0


@dataclass
class ThresholdState:
    """Running threshold estimator for one (node, subband) error stream."""

    sigma_sq: float
    gamma: float
    k_xi: float
    n_w: int
    c: float
    window: np.ndarray = field(default=None)
    filled: int = 0
    pos: int = 0

    @property
    def xi(self) -> float:
        return self.k_xi * np.sqrt(self.sigma_sq)


def init_threshold(gamma: float = 0.99, k_xi: float = 2.576, n_w: int = 5,
                   sigma0_sq: float = 1.0) -> ThresholdState:
    """Fresh state with an empty window and sigma^2 = sigma0_sq.

    Until the window holds n_w entries the median runs over the entries
    present; over-estimating sigma0 keeps legitimate early errors from being
    rejected.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"forgetting factor gamma={gamma} must lie strictly in (0, 1)")
    if n_w < 1 or n_w % 2 == 0:
        raise ValueError(f"window length n_w={n_w} must be odd and positive")
    if sigma0_sq <= 0.0:
        raise ValueError("sigma0_sq must be positive")
    if k_xi <= 0.0:
        raise ValueError("k_xi must be positive")
    return ThresholdState(sigma_sq=float(sigma0_sq), gamma=float(gamma), k_xi=float(k_xi),
                          n_w=int(n_w), c=c_factor(n_w), window=np.zeros(n_w))


def update_threshold(state: ThresholdState, e: float):
    """Push e^2 into the window, refresh sigma^2, and return (state, xi).

    The state is updated with the new error *before* the returned xi is used
    to gate that same error; tests pin this ordering.
    """
    state.window[state.pos] = e * e
    state.pos = (state.pos + 1) % state.n_w
    if state.filled < state.n_w:
        state.filled += 1
    med = float(np.median(state.window[: state.filled])) if state.filled < state.n_w \
        else float(np.median(state.window))
    state.sigma_sq = state.gamma * state.sigma_sq + state.c * (1.0 - state.gamma) * med
    return state, state.k_xi * np.sqrt(state.sigma_sq)
