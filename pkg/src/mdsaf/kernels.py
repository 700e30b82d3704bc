"""Whole-trial simulation kernels (numba-accelerated, pure-Python fallback).

Each kernel advances an entire network for every iteration of one
Monte-Carlo trial and records the per-iteration network MSD.  The loops are
written scalar-style so numba compiles them to tight machine code; with
``MDSAF_DISABLE_NUMBA=1`` the identical source runs under plain Python (slow,
for debugging/benchmarks).  Equivalence against the reference step functions
in :mod:`mdsaf.algorithms` is pinned by tests.

Conventions shared by all kernels:
  * padded input streams: regressor element j of node k at base index t is
    ``u_pad[..., t - j]`` with t = iteration*hop + (M-1), so early regressors
    are implicitly zero-padded;
  * MSD is recorded *before* the weight update of the same iteration;
  * a trial whose network MSD exceeds DIVERGENCE_CAP (or goes non-finite)
    is marked diverged and its remaining curve is held at the cap.
"""

from __future__ import annotations

import numpy as np

from ._accel import maybe_njit

DIVERGENCE_CAP = 1e30


@maybe_njit
def _median_small(buf, tmp, count):
    """Median of buf[:count] via insertion sort into tmp (count >= 1)."""
    for i in range(count):
        tmp[i] = buf[i]
    for i in range(1, count):
        key = tmp[i]
        j = i - 1
        while j >= 0 and tmp[j] > key:
            tmp[j + 1] = tmp[j]
            j -= 1
        tmp[j + 1] = key
    half = count // 2
    if count % 2 == 1:
        return tmp[half]
    return 0.5 * (tmp[half - 1] + tmp[half])


@maybe_njit
def _network_msd(w, w_star, sign):
    n_nodes, m_taps = w.shape
    acc = 0.0
    for k in range(n_nodes):
        s = 0.0
        for j in range(m_taps):
            d = sign * w_star[k, j] - w[k, j]
            s += d * d
        acc += s
    return acc / n_nodes


@maybe_njit
def nmsaf_trial_kernel(u_pad, d_dec, w_star, flip_iter,
                       mu, eta, eps_reg, k_xi, thr_gamma, c_fac, n_w, sigma0_sq,
                       intra_idx, intra_cnt, intra_w,
                       inter_idx, inter_cnt, inter_w,
                       tail_from, msd_out, pass_out):
    """MD-NMSAF trial. u_pad: (N, N_D, T_pad), d_dec: (N, N_D, iters).

    Per subband and iteration the threshold state is refreshed with the new
    error first, then the refreshed xi gates that error.  Returns 1 when the
    trial diverged, else 0.
    """
    n_nodes, n_sub, _ = u_pad.shape
    iters = d_dec.shape[2]
    m_taps = w_star.shape[1]

    w = np.zeros((n_nodes, m_taps))
    psi = np.zeros((n_nodes, m_taps))
    sig2 = np.full((n_nodes, n_sub), sigma0_sq)
    win = np.zeros((n_nodes, n_sub, n_w))
    win_len = np.zeros((n_nodes, n_sub), dtype=np.int64)
    win_pos = np.zeros((n_nodes, n_sub), dtype=np.int64)
    tmp = np.empty(n_w)

    for n in range(iters):
        sign = -1.0 if (flip_iter >= 0 and n >= flip_iter) else 1.0
        msd = _network_msd(w, w_star, sign)
        if not np.isfinite(msd) or msd > DIVERGENCE_CAP:
            for r in range(n, iters):
                msd_out[r] = DIVERGENCE_CAP
            return 1
        msd_out[n] = msd

        base = n * n_sub + m_taps - 1
        for k in range(n_nodes):
            for j in range(m_taps):
                psi[k, j] = w[k, j]
            for i in range(n_sub):
                e = d_dec[k, i, n]
                nrm = eps_reg
                for j in range(m_taps):
                    v = u_pad[k, i, base - j]
                    e -= v * w[k, j]
                    nrm += v * v
                # threshold recursion: update sigma^2, then gate with new xi
                win[k, i, win_pos[k, i]] = e * e
                win_pos[k, i] = (win_pos[k, i] + 1) % n_w
                if win_len[k, i] < n_w:
                    win_len[k, i] += 1
                med = _median_small(win[k, i], tmp, win_len[k, i])
                sig2[k, i] = thr_gamma * sig2[k, i] + c_fac * (1.0 - thr_gamma) * med
                xi = k_xi * np.sqrt(sig2[k, i])
                if abs(e) < xi:
                    g = mu * e / nrm
                    for j in range(m_taps):
                        psi[k, j] += g * u_pad[k, i, base - j]
                    if n >= tail_from:
                        pass_out[k, i] += 1
            if eta > 0.0:
                for c in range(inter_cnt[k]):
                    l = inter_idx[k, c]
                    coef = mu * eta * inter_w[k, c]
                    for j in range(m_taps):
                        psi[k, j] += coef * (w[l, j] - w[k, j])
        for k in range(n_nodes):
            for j in range(m_taps):
                acc = 0.0
                for c in range(intra_cnt[k]):
                    acc += intra_w[k, c] * psi[intra_idx[k, c], j]
                w[k, j] = acc
    return 0


@maybe_njit
def lms_trial_kernel(u_pad, d, w_star, flip_iter, mu, eta,
                     intra_idx, intra_cnt, intra_w,
                     inter_idx, inter_cnt, inter_w, msd_out):
    """MD-LMS trial (fullband, unnormalized). u_pad: (N, T_pad), d: (N, iters)."""
    n_nodes = u_pad.shape[0]
    iters = d.shape[1]
    m_taps = w_star.shape[1]
    w = np.zeros((n_nodes, m_taps))
    psi = np.zeros((n_nodes, m_taps))

    for n in range(iters):
        sign = -1.0 if (flip_iter >= 0 and n >= flip_iter) else 1.0
        msd = _network_msd(w, w_star, sign)
        if not np.isfinite(msd) or msd > DIVERGENCE_CAP:
            for r in range(n, iters):
                msd_out[r] = DIVERGENCE_CAP
            return 1
        msd_out[n] = msd

        base = n + m_taps - 1
        for k in range(n_nodes):
            e = d[k, n]
            for j in range(m_taps):
                e -= u_pad[k, base - j] * w[k, j]
            for j in range(m_taps):
                psi[k, j] = w[k, j] + mu * e * u_pad[k, base - j]
            if eta > 0.0:
                for c in range(inter_cnt[k]):
                    l = inter_idx[k, c]
                    coef = mu * eta * inter_w[k, c]
                    for j in range(m_taps):
                        psi[k, j] += coef * (w[l, j] - w[k, j])
        for k in range(n_nodes):
            for j in range(m_taps):
                acc = 0.0
                for c in range(intra_cnt[k]):
                    acc += intra_w[k, c] * psi[intra_idx[k, c], j]
                w[k, j] = acc
    return 0


AP_PLAIN = 0
AP_M_ESTIMATE = 1
AP_CORRENTROPY = 2


@maybe_njit
def ap_trial_kernel(u_pad, d_pad, w_star, flip_iter, mode, p_order, sigma_mcc,
                    mu, eta, eps_reg, k_xi, thr_gamma, c_fac, n_w, sigma0_sq,
                    intra_idx, intra_cnt, intra_w,
                    inter_idx, inter_cnt, inter_w, msd_out):
    """Affine-projection family trial: MD-APA / MD-APM / MD-APMCC by mode.

    u_pad: (N, iters + M - 1), d_pad: (N, iters + P - 1) with the first P-1
    entries zero so the block of P most recent reference samples at iteration
    n is d_pad[:, n : n + P][reversed].  MD-APM drives one fullband threshold
    per node with the newest a-priori error, then gates all P components.
    """
    n_nodes = u_pad.shape[0]
    m_taps = w_star.shape[1]
    iters = d_pad.shape[1] - (p_order - 1)
    w = np.zeros((n_nodes, m_taps))
    psi = np.zeros((n_nodes, m_taps))
    sig2 = np.full(n_nodes, sigma0_sq)
    win = np.zeros((n_nodes, n_w))
    win_len = np.zeros(n_nodes, dtype=np.int64)
    win_pos = np.zeros(n_nodes, dtype=np.int64)
    tmp = np.empty(n_w)
    u_mat = np.zeros((m_taps, p_order))
    err = np.zeros(p_order)
    gram = np.zeros((p_order, p_order))

    for n in range(iters):
        sign = -1.0 if (flip_iter >= 0 and n >= flip_iter) else 1.0
        msd = _network_msd(w, w_star, sign)
        if not np.isfinite(msd) or msd > DIVERGENCE_CAP:
            for r in range(n, iters):
                msd_out[r] = DIVERGENCE_CAP
            return 1
        msd_out[n] = msd

        for k in range(n_nodes):
            # assemble the P most recent regressors (column p lags by p) and
            # a-priori errors; lags reaching before t=0 give zero columns
            for p in range(p_order):
                t = n - p
                base = t + m_taps - 1
                if t < 0:
                    for j in range(m_taps):
                        u_mat[j, p] = 0.0
                    err[p] = 0.0
                else:
                    e = d_pad[k, t + p_order - 1]
                    for j in range(m_taps):
                        v = u_pad[k, base - j]
                        u_mat[j, p] = v
                        e -= v * w[k, j]
                    err[p] = e
            if mode == AP_M_ESTIMATE:
                e0 = err[0]
                win[k, win_pos[k]] = e0 * e0
                win_pos[k] = (win_pos[k] + 1) % n_w
                if win_len[k] < n_w:
                    win_len[k] += 1
                med = _median_small(win[k], tmp, win_len[k])
                sig2[k] = thr_gamma * sig2[k] + c_fac * (1.0 - thr_gamma) * med
                xi = k_xi * np.sqrt(sig2[k])
                for p in range(p_order):
                    if abs(err[p]) >= xi:
                        err[p] = 0.0
            elif mode == AP_CORRENTROPY:
                for p in range(p_order):
                    err[p] *= np.exp(-err[p] * err[p] / (2.0 * sigma_mcc * sigma_mcc))
            for a in range(p_order):
                for b in range(p_order):
                    acc = 0.0
                    for j in range(m_taps):
                        acc += u_mat[j, a] * u_mat[j, b]
                    gram[a, b] = acc
                gram[a, a] += eps_reg
            sol = np.linalg.solve(gram, err)
            for j in range(m_taps):
                upd = 0.0
                for p in range(p_order):
                    upd += u_mat[j, p] * sol[p]
                psi[k, j] = w[k, j] + mu * upd
            if eta > 0.0:
                for c in range(inter_cnt[k]):
                    l = inter_idx[k, c]
                    coef = mu * eta * inter_w[k, c]
                    for j in range(m_taps):
                        psi[k, j] += coef * (w[l, j] - w[k, j])
        for k in range(n_nodes):
            for j in range(m_taps):
                acc = 0.0
                for c in range(intra_cnt[k]):
                    acc += intra_w[k, c] * psi[intra_idx[k, c], j]
                w[k, j] = acc
    return 0
