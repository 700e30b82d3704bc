"""Cosine-modulated pseudo-QMF analysis bank, critical decimation, regressors.

The bank splits a full-rate signal into N_D subband signals which the
adaptive filter consumes at the decimated rate (every N_D-th sample).  No
synthesis bank is implemented: performance is measured directly on weight
vectors, so output reconstruction is never needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin, oaconvolve


@dataclass(frozen=True)
class AnalysisBank:
    """N_D analysis filters of common length derived from one lowpass prototype."""

    filters: np.ndarray    # (N_D, L_p)
    prototype: np.ndarray  # (L_p,)

    @property
    def n_subbands(self) -> int:
        return self.filters.shape[0]

    @property
    def taps(self) -> int:
        return self.filters.shape[1]


def _modulate(prototype: np.ndarray, n_d: int) -> np.ndarray:
    l_p = len(prototype)
    m = np.arange(l_p)
    filters = np.empty((n_d, l_p))
    for i in range(n_d):
        filters[i] = 2.0 * prototype * np.cos(
            (np.pi / n_d) * (i + 0.5) * (m - (l_p - 1) / 2.0) + (-1.0) ** i * np.pi / 4.0
        )
    return filters


def power_complementarity_ripple_db(bank_or_filters, n_grid: int = 1024) -> float:
    """Peak-to-peak ripple (dB) of sum_i |H_i(e^jw)|^2 on an n_grid frequency grid."""
    filters = getattr(bank_or_filters, "filters", bank_or_filters)
    H = np.fft.rfft(filters, n=2 * n_grid, axis=1)
    total = (np.abs(H) ** 2).sum(axis=0)
    return float(10.0 * np.log10(total.max() / total.min()))


def design_bank(n_d: int, l_p: int | None = None) -> AnalysisBank:
    """Design the analysis bank for n_d subbands.

    Prototype: Hamming-windowed sinc lowpass of length l_p (default 8*n_d)
    with a nominal cutoff of pi/(2*n_d).  The cutoff is then widened by a
    deterministic grid search so the band-edge crossover sits near -3 dB,
    which is what keeps the power-complementarity ripple small (the nominal
    -6 dB crossover of a plain windowed sinc leaves a ~3 dB inter-band dip).
    For n_d = 1 the bank is the identity.
    """
    if n_d < 1:
        raise ValueError("subband count must be >= 1")
    if n_d == 1:
        proto = np.array([1.0])
        return AnalysisBank(filters=proto[None, :].copy(), prototype=proto)
    if l_p is None:
        l_p = 8 * n_d
    if l_p % (2 * n_d) != 0:
        raise ValueError(f"prototype length {l_p} must be a multiple of 2*N_D={2 * n_d}")
    best = None
    for scale in np.linspace(0.9, 1.6, 281):
        proto = firwin(l_p, scale / (2.0 * n_d), window="hamming")
        ripple = power_complementarity_ripple_db(_modulate(proto, n_d))
        if best is None or ripple < best[0]:
            best = (ripple, proto)
    proto = best[1]
    return AnalysisBank(filters=_modulate(proto, n_d), prototype=proto)


def analyze(signal: np.ndarray, bank: AnalysisBank) -> np.ndarray:
    """Split a full-rate signal into (N_D, T) subband signals (zero initial state)."""
    signal = np.asarray(signal, dtype=float)
    t = len(signal)
    if bank.n_subbands == 1 and bank.taps == 1:
        return signal[None, :] * bank.filters[0, 0]
    return oaconvolve(signal[None, :], bank.filters, axes=-1)[:, :t]


def decimate(subbands: np.ndarray, n_d: int) -> np.ndarray:
    """Critical decimation: keep every n_d-th sample, out[..., n] = in[..., n*n_d]."""
    return np.asarray(subbands)[..., ::n_d]


def subband_regressors(u_subbands: np.ndarray, n: int, m_taps: int) -> np.ndarray:
    """Most-recent-first regressors at decimated index n.

    Returns (N_D, M) with row i = [u_i(n*N_D), u_i(n*N_D - 1), ...], samples
    before t = 0 taken as zero.
    """
    n_d, t_full = u_subbands.shape
    end = n * n_d
    if end >= t_full:
        raise IndexError(f"decimated index {n} addresses sample {end} beyond stream length {t_full}")
    out = np.zeros((n_d, m_taps))
    lo = max(0, end - m_taps + 1)
    chunk = u_subbands[:, lo:end + 1][:, ::-1]
    out[:, : chunk.shape[1]] = chunk
    return out


def save_bank_file(bank: AnalysisBank, path) -> None:
    """Write filters as plain text: one coefficient per line, blank line between subbands."""
    blocks = ["\n".join(repr(float(c)) for c in row) for row in bank.filters]
    with open(path, "w") as fh:
        fh.write("\n\n".join(blocks) + "\n")


def load_bank_file(path) -> AnalysisBank:
    """Load an externally designed bank from the plain-text coefficient format."""
    with open(path) as fh:
        text = fh.read()
    blocks = [b for b in text.split("\n\n") if b.strip()]
    rows = [np.array([float(line) for line in b.split()]) for b in blocks]
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"bank file {path}: subband filters have unequal lengths {sorted(lengths)}")
    filters = np.vstack(rows)
    return AnalysisBank(filters=filters, prototype=filters[0].copy())
