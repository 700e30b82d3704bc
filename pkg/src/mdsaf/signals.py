"""Input processes, contaminated-Gaussian noise, and the linear reference model.

Inputs are white Gaussian or AR(1)/AR(2) processes with per-node innovation
variances; measurement noise is a contaminated-Gaussian (CG) mixture: white
background noise plus Bernoulli-gated high-variance Gaussian impulses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class InputModel:
    """Per-node input process. kind in {"white", "ar1", "ar2"}.

    sigma_delta_sq holds the innovation variance of every node.  AR models
    must be wide-sense stationary (poles strictly inside the unit circle).
    """

    kind: str
    sigma_delta_sq: np.ndarray
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0

    def __post_init__(self):
        if self.kind not in ("white", "ar1", "ar2"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        object.__setattr__(self, "sigma_delta_sq",
                           np.atleast_1d(np.asarray(self.sigma_delta_sq, dtype=float)))
        if np.any(self.sigma_delta_sq <= 0):
            raise ValueError("innovation variances must be positive")
        if self.kind == "ar1" and abs(self.beta1) >= 1.0:
            raise ValueError(f"AR(1) coefficient {self.beta1} is not stationary")
        if self.kind == "ar2":
            # poles of 1 - b2 z^-1 - b3 z^-2
            roots = np.roots([1.0, -self.beta2, -self.beta3])
            if np.any(np.abs(roots) >= 1.0):
                raise ValueError(f"AR(2) coefficients ({self.beta2}, {self.beta3}) are not stationary")

    @property
    def ar_denominator(self) -> np.ndarray:
        if self.kind == "ar1":
            return np.array([1.0, -self.beta1])
        if self.kind == "ar2":
            return np.array([1.0, -self.beta2, -self.beta3])
        return np.array([1.0])


@dataclass(frozen=True)
class NoiseModel:
    """CG noise: v = v_g + b*c, b ~ Bernoulli(p_r), c ~ N(0, kappa * sigma_g_sq)."""

    sigma_g_sq: np.ndarray
    p_r: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sigma_g_sq",
                           np.atleast_1d(np.asarray(self.sigma_g_sq, dtype=float)))
        if np.any(self.sigma_g_sq <= 0):
            raise ValueError("background variances must be positive")
        if not 0.0 <= self.p_r <= 1.0:
            raise ValueError("impulse probability must lie in [0, 1]")
        if self.kappa < 1.0:
            raise ValueError("impulse variance ratio kappa must be >= 1")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_input(model: InputModel, length: int, seed, node: int = 0,
              burn: int | None = None) -> np.ndarray:
    """Generate ``length`` samples of the node's input process.

    AR state is warm-started by discarding ``burn`` leading samples
    (default 10x a nominal filter length of 16; pass the actual 10*M when
    the filter length is known).
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = _as_rng(seed)
    sigma = float(np.sqrt(model.sigma_delta_sq[node % len(model.sigma_delta_sq)]))
    if model.kind == "white":
        return sigma * rng.standard_normal(length)
    if burn is None:
        burn = 160
    innov = sigma * rng.standard_normal(length + burn)
    out = lfilter([1.0], model.ar_denominator, innov)
    return out[burn:]


def gen_noise(model: NoiseModel, length: int, seed, node: int = 0) -> np.ndarray:
    """CG measurement noise: background + Bernoulli-gated impulses.

    The three streams (background, gate, impulse amplitudes) are drawn from
    independent child generators so p_r=0 and p_r>0 share the background
    realization for a given seed.
    """
    if isinstance(seed, np.random.Generator):
        rng_g = rng_b = rng_c = seed
    else:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rng_g, rng_b, rng_c = (np.random.default_rng(s) for s in ss.spawn(3))
    sg = float(np.sqrt(model.sigma_g_sq[node % len(model.sigma_g_sq)]))
    v = sg * rng_g.standard_normal(length)
    if model.p_r > 0.0:
        gate = rng_b.random(length) < model.p_r
        v = v + gate * (np.sqrt(model.kappa) * sg) * rng_c.standard_normal(length)
    return v


def gen_reference(u: np.ndarray, w_star: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Linear model d(t) = u^T(t) w* + v(t).

    The regressor is most-recent-first: u(t) = [u(t), u(t-1), ..., u(t-M+1)],
    zero-padded before t = M-1, so the clean part is the convolution of the
    input with the taps.
    """
    u = np.asarray(u, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"input/noise length mismatch: {u.shape} vs {v.shape}")
    clean = np.convolve(u, w_star)[: len(u)]
    return clean + v


def load_profile(path) -> dict:
    """Load a per-node variance profile file: {"sigma_delta_sq": [...], "sigma_g_sq": [...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    return {
        "sigma_delta_sq": np.asarray(doc["sigma_delta_sq"], dtype=float),
        "sigma_g_sq": np.asarray(doc["sigma_g_sq"], dtype=float),
    }
