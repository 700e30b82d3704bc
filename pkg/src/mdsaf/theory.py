"""Analytical predictions: moments, stability bounds, transient/steady-state MSD.

The weight-error recursion of the subband diffusion algorithm is linear once
the gate is replaced by its pass probability and moments are frozen at their
steady-state values.  This module estimates those moments by Monte-Carlo
sampling of steady-state regressor/noise draws, then evaluates

  * the mean-stability step bound,
  * the mean-square stability boundary (bisection on the spectral radius of
    the covariance propagation operator, plus a companion-matrix form for
    small problems),
  * the transient network-MSD recursion, and
  * the steady-state network MSD via a dense linear solve.

All vectorizations are column-major; (A kron B) vec(X) = vec(B X A^T).  The
covariance operator is applied in structured form (a handful of (NM)x(NM)
products per step instead of one (NM)^2-sized matrix-vector product), which
keeps desk-scale transient curves cheap.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.sparse.linalg import LinearOperator, eigs

from .filterbank import AnalysisBank, analyze
from .network import CombinationWeights, TargetSet, Topology
from .signals import InputModel, NoiseModel, gen_input

DEFAULT_CAP = 10_000  # largest allowed (N*M)^2 for the dense recursions


class TheoryError(RuntimeError):
    pass


class StabilityError(TheoryError):
    """Requested prediction does not exist: algorithm not stable at this mu."""


class TheoryCapError(TheoryError):
    """(N*M)^2 exceeds the configured cap; dense recursion unavailable."""


def _vec(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, order="F")


def _unvec(v: np.ndarray, n: int) -> np.ndarray:
    return v.reshape(n, n, order="F")


def build_g(alpha: np.ndarray, m_taps: int) -> np.ndarray:
    """G = C^T kron I_M with C[m, k] = alpha_{m,k}."""
    return np.kron(alpha.T, np.eye(m_taps))


def build_q(gamma: np.ndarray, m_taps: int) -> np.ndarray:
    """Inter-cluster coupling operator: the update's consensus term is -mu*eta*Q w.

    Q = (diag(row sums) - gamma) kron I_M, which reduces to I - gamma kron I
    when every row sums to one and leaves nodes without inter-cluster
    neighbors uncoupled.
    """
    s = np.diag(gamma.sum(axis=1))
    return np.kron(s - gamma, np.eye(m_taps))


@dataclass(frozen=True)
class NetworkMatrices:
    """Global operators of the stacked-network recursions."""

    g: np.ndarray        # (NM, NM)
    q: np.ndarray        # (NM, NM)
    w_star: np.ndarray   # (NM,)
    n_nodes: int
    m_taps: int

    def zeta(self, mu: float, eta: float) -> np.ndarray:
        """Bias drive zeta = mu * eta * G Q w*."""
        return mu * eta * (self.g @ (self.q @ self.w_star))


def build_network_matrices(topo: Topology, weights: CombinationWeights,
                           targets: TargetSet) -> NetworkMatrices:
    m_taps = targets.w_star.shape[1]
    return NetworkMatrices(g=build_g(weights.alpha, m_taps),
                           q=build_q(weights.gamma, m_taps),
                           w_star=targets.stacked.copy(),
                           n_nodes=topo.n_nodes, m_taps=m_taps)


def analytic_update_probability(k_xi: float = 2.576, p_r: float = 0.0) -> float:
    """Fallback pass probability (1 - p_r) * (2 Phi(k_xi) - 1)."""
    return (1.0 - p_r) * math.erf(k_xi / math.sqrt(2.0))


@dataclass
class MomentSet:
    """Monte-Carlo moment estimates feeding every theory formula."""

    n_nodes: int
    n_sub: int
    m_taps: int
    eta: float
    p_upd: np.ndarray        # (N, N_D) update probabilities
    ea_blocks: np.ndarray    # (N, N_D, M, M) E{u u^T / ||u||^2}
    eb_blocks: np.ndarray    # (N, M, M) E{B_k}
    s_blocks: np.ndarray     # (N, M^2, M^2) E{B_k kron B_k}
    ett_blocks: np.ndarray   # (N, M, M) E{T_k T_k^T}
    sigma_g_sub: np.ndarray  # (N, N_D) subband background-noise variances
    q: np.ndarray            # (NM, NM) coupling operator used in E{Z}
    n_draws: int
    rel_std_err: float
    _eb_dense: np.ndarray = field(default=None, repr=False)
    _ez_dense: np.ndarray = field(default=None, repr=False)

    @property
    def nm(self) -> int:
        return self.n_nodes * self.m_taps

    @property
    def eb(self) -> np.ndarray:
        """Block-diagonal E{B} (NM x NM)."""
        if self._eb_dense is None:
            m = self.m_taps
            out = np.zeros((self.nm, self.nm))
            for k in range(self.n_nodes):
                out[k * m:(k + 1) * m, k * m:(k + 1) * m] = self.eb_blocks[k]
            self._eb_dense = out
        return self._eb_dense

    @property
    def ez(self) -> np.ndarray:
        """E{Z} = E{B} + eta * Q."""
        if self._ez_dense is None:
            self._ez_dense = self.eb + self.eta * self.q
        return self._ez_dense

    def ez_kron_z(self, factored: bool = False) -> np.ndarray:
        """Dense E{Z kron Z} (N^2 M^2 square).

        factored=True returns the cheaper E{Z} kron E{Z} approximation, which
        drops the per-node fourth-moment correction (documented accuracy loss
        in the misadjustment term).
        """
        ez = self.ez
        if factored:
            return np.kron(ez, ez)
        m, nm = self.m_taps, self.nm
        out = np.kron(self.eb, self.eb)
        for k in range(self.n_nodes):
            idx = ((k * m + np.arange(m))[:, None] * nm + (k * m + np.arange(m))[None, :]).ravel()
            out[np.ix_(idx, idx)] = self.s_blocks[k]
        eq = self.eta * self.q
        out += np.kron(self.eb, eq) + np.kron(eq, self.eb) + np.kron(eq, eq)
        return out

    @property
    def ett(self) -> np.ndarray:
        """Block-diagonal E{T T^T} (NM x NM)."""
        m = self.m_taps
        out = np.zeros((self.nm, self.nm))
        for k in range(self.n_nodes):
            out[k * m:(k + 1) * m, k * m:(k + 1) * m] = self.ett_blocks[k]
        return out


def estimate_moments(input_model: InputModel, noise_model: NoiseModel,
                     bank: AnalysisBank, topo: Topology, weights: CombinationWeights,
                     m_taps: int, eta: float, n_draws: int = 20_000, seed: int = 0,
                     p_upd=None, k_xi: float = 2.576,
                     noise_len: int = 200_000) -> MomentSet:
    """Estimate all moment matrices by sample averages over steady-state draws.

    Per node, regressor windows for all subbands are drawn jointly at widely
    separated time offsets of one long filtered stream, so cross-subband
    correlation (which feeds E{B_k kron B_k}) is retained while consecutive
    draws are effectively independent.  p_upd (N, N_D) comes from a pilot
    simulation when given, else from the analytic fallback
    (1 - p_r) (2 Phi(k_xi) - 1).
    """
    n = topo.n_nodes
    n_d = bank.n_subbands
    l_p = bank.taps
    if p_upd is None:
        p_upd = np.full((n, n_d), analytic_update_probability(k_xi, noise_model.p_r))
    else:
        p_upd = np.asarray(p_upd, dtype=float)
        if p_upd.shape != (n, n_d):
            raise ValueError(f"p_upd shape {p_upd.shape} != {(n, n_d)}")

    ea = np.empty((n, n_d, m_taps, m_taps))
    eb = np.empty((n, m_taps, m_taps))
    s4 = np.empty((n, m_taps * m_taps, m_taps * m_taps))
    equu4 = np.empty((n, n_d, m_taps, m_taps))
    sigma_g_sub = np.empty((n, n_d))
    rse = 0.0

    stride = m_taps + l_p + 128  # gap decorrelates consecutive draws
    t0 = l_p + m_taps + stride
    ends = t0 + stride * np.arange(n_draws)
    t_in = int(ends[-1]) + 1

    for k in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, 101)))
        u = gen_input(input_model, t_in, rng, node=k, burn=10 * m_taps)
        u_sub = analyze(u, bank)
        # windows[s, i, :] = [u_i(t_s), u_i(t_s - 1), ..., u_i(t_s - M + 1)]
        sw = sliding_window_view(u_sub, m_taps, axis=1)
        win = sw[:, ends - m_taps + 1, :][:, :, ::-1].transpose(1, 0, 2).copy()
        nrm2 = np.maximum(np.einsum("sim,sim->si", win, win), 1e-300)
        win_n = win / np.sqrt(nrm2)[:, :, None]
        for i in range(n_d):
            ea[k, i] = np.einsum("sm,sn->mn", win_n[:, i], win_n[:, i]) / n_draws
            qv = win[:, i] / nrm2[:, i, None]
            equu4[k, i] = np.einsum("sm,sn->mn", qv, qv) / n_draws
        b_draws = np.einsum("i,sim,sin->smn", p_upd[k], win_n, win_n)
        eb[k] = b_draws.mean(axis=0)
        s4[k] = np.einsum("sab,scd->abcd", b_draws, b_draws).reshape(
            m_taps * m_taps, m_taps * m_taps) / n_draws
        # Frobenius-aggregated standard error of the E{B_k} estimate
        se = math.sqrt(float(b_draws.var(axis=0, ddof=1).sum()) / n_draws)
        rse = max(rse, se / float(np.linalg.norm(eb[k])))

        rng_nz = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, 102)))
        vg = math.sqrt(noise_model.sigma_g_sq[k % len(noise_model.sigma_g_sq)]) \
            * rng_nz.standard_normal(noise_len)
        vg_sub = analyze(vg, bank)
        sigma_g_sub[k] = vg_sub[:, l_p:].var(axis=1)

    ett = np.einsum("ki,ki,kimn->kmn", p_upd ** 2, sigma_g_sub, equu4)
    if rse > 0.05:
        warnings.warn(f"moment estimator relative standard error {rse:.1%} > 5%; "
                      f"increase n_draws", stacklevel=2)
    return MomentSet(n_nodes=n, n_sub=n_d, m_taps=m_taps, eta=eta, p_upd=p_upd,
                     ea_blocks=ea, eb_blocks=eb, s_blocks=s4, ett_blocks=ett,
                     sigma_g_sub=sigma_g_sub, q=build_q(weights.gamma, m_taps),
                     n_draws=n_draws, rel_std_err=rse)


# ---------------------------------------------------------------------------
# covariance propagation operator
# ---------------------------------------------------------------------------

def _ezwz(moments: MomentSet, w_mat: np.ndarray) -> np.ndarray:
    """E{Z W Z^T} using the exact per-node fourth moments on diagonal blocks."""
    m = moments.m_taps
    eb, eta, q = moments.eb, moments.eta, moments.q
    out = eb @ w_mat @ eb
    for k in range(moments.n_nodes):
        sl = slice(k * m, (k + 1) * m)
        out[sl, sl] = _unvec(moments.s_blocks[k] @ _vec(w_mat[sl, sl]), m)
    if eta != 0.0:
        qw = q @ w_mat
        out += eta * (eb @ w_mat @ q.T + qw @ eb) + (eta * eta) * (qw @ q.T)
    return out


def apply_covariance_step(moments: MomentSet, net: NetworkMatrices,
                          w_mat: np.ndarray, mu: float) -> np.ndarray:
    """One application of the homogeneous covariance operator: unvec(F vec(W))."""
    ez = moments.ez
    bracket = w_mat - mu * (ez @ w_mat + w_mat @ ez.T) + mu * mu * _ezwz(moments, w_mat)
    return net.g @ bracket @ net.g.T


def covariance_operator_dense(moments: MomentSet, net: NetworkMatrices, mu: float,
                              factored: bool = False) -> np.ndarray:
    """Dense (N^2M^2 square) covariance propagation matrix."""
    nm = moments.nm
    _check_cap(nm)
    eye = np.eye(nm)
    ez = moments.ez
    k_mat = np.eye(nm * nm) - mu * (np.kron(eye, ez) + np.kron(ez, eye)) \
        + mu * mu * moments.ez_kron_z(factored=factored)
    return np.kron(net.g, net.g) @ k_mat


def _check_cap(nm: int, cap: int = DEFAULT_CAP) -> None:
    if nm * nm > cap:
        raise TheoryCapError(
            f"(N*M)^2 = {nm * nm} exceeds the dense-recursion cap {cap}; "
            f"theory predictions are unavailable at this size by design")


def spectral_radius(moments: MomentSet, net: NetworkMatrices, mu: float) -> float:
    """Spectral radius of the covariance operator at step size mu (ARPACK)."""
    nm = moments.nm
    dim = nm * nm

    def matvec(x):
        return _vec(apply_covariance_step(moments, net, _unvec(x, nm), mu))

    v0 = np.random.default_rng(1234).standard_normal(dim)
    op = LinearOperator((dim, dim), matvec=matvec)
    try:
        vals = eigs(op, k=2, which="LM", v0=v0, maxiter=5000, tol=1e-9,
                    return_eigenvectors=False)
        return float(np.abs(vals).max())
    except Exception:
        # power-iteration fallback: geometric-mean growth over a window
        x = v0 / np.linalg.norm(v0)
        growth = 1.0
        for _ in range(300):
            y = matvec(x)
            growth = np.linalg.norm(y)
            if growth == 0.0:
                return 0.0
            x = y / growth
        return float(growth)


def mean_recursion_radius(moments: MomentSet, net: NetworkMatrices, mu: float) -> float:
    """Spectral radius of the mean recursion matrix G (I - mu E{Z})."""
    g1 = net.g @ (np.eye(moments.nm) - mu * moments.ez)
    return float(np.abs(np.linalg.eigvals(g1)).max())


def mean_step_bound(moments: MomentSet, eta: float = None) -> float:
    """Mean-stability step bound 2 / (max_k lambda_max(E{B_k}) + 2 eta)."""
    if eta is None:
        eta = moments.eta
    lam = max(float(np.linalg.eigvalsh(b).max()) for b in moments.eb_blocks)
    return 2.0 / (lam + 2.0 * eta)


def ms_step_bound(moments: MomentSet, net: NetworkMatrices = None,
                  method: str = "bisection", rel_tol: float = 1e-4,
                  companion_cap: int = 3600) -> float:
    """Mean-square stability step bound.

    method="bisection" (default, used by the acceptance bracket): locate the
    smallest mu where max(rho(F(mu)), rho(G1(mu))) reaches 1, i.e. the exact
    stability boundary of the covariance recursion with the full
    E{Z kron Z} moment.  This is the step size beyond which the predicted
    steady-state MSD ceases to exist.

    method="factored": the closed form built from the *factored* second moment
    (A = (E{Z}^T kron I) + (I kron E{Z}^T), F = E{Z}^T kron E{Z}^T), i.e.
    the stability of K = I - mu A + mu^2 F.  Since that K equals
    (I - mu E{Z}^T) kron (I - mu E{Z}^T), its boundary is computed exactly
    as the first mu where rho(I - mu E{Z}) reaches 1 (no giant matrices
    needed).  This form discards the fourth-moment curvature and therefore
    sits well above the bisection bound.

    method="companion": the same factored form evaluated literally through
    min{ 1/lambda_max(A^-1 F), 1/max positive real eigenvalue of
    [[A/2, -F/2], [I, 0]] }; quadratic-size dense, capped to small networks,
    kept as a cross-check of the factored route.
    """
    if method == "companion":
        return _ms_bound_companion(moments, companion_cap)
    if method == "factored":
        return _ms_bound_factored(moments, rel_tol)
    if method != "bisection":
        raise ValueError(f"unknown method {method!r}")
    if net is None:
        raise ValueError("bisection method needs the NetworkMatrices")
    _check_cap(moments.nm)

    def unstable(mu):
        return max(spectral_radius(moments, net, mu),
                   mean_recursion_radius(moments, net, mu)) >= 1.0

    lo = 0.0
    hi = mean_step_bound(moments)
    for _ in range(60):
        if unstable(hi):
            break
        lo = hi
        hi *= 2.0
    else:
        raise TheoryError("no unstable step size found; moments look degenerate")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if unstable(mid):
            hi = mid
        else:
            lo = mid
    return lo


def _ms_bound_factored(moments: MomentSet, rel_tol: float) -> float:
    """Boundary of rho(I - mu E{Z}) < 1 (factored-moment stability)."""
    ez = moments.ez
    eye = np.eye(moments.nm)

    def stable(mu):
        return float(np.abs(np.linalg.eigvals(eye - mu * ez)).max()) < 1.0

    lo, hi = 0.0, 1.0
    for _ in range(80):
        if not stable(hi):
            break
        lo = hi
        hi *= 2.0
    else:
        raise TheoryError("factored recursion never destabilizes; E{Z} looks singular")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _ms_bound_companion(moments: MomentSet, cap: int) -> float:
    nm = moments.nm
    if nm * nm > cap:
        raise TheoryCapError(f"companion form needs (N*M)^2 <= {cap}, got {nm * nm}")
    ezt = moments.ez.T
    eye = np.eye(nm)
    a_mat = np.kron(ezt, eye) + np.kron(eye, ezt)
    f_mat = np.kron(ezt, ezt)
    candidates = []
    lam = np.linalg.eigvals(np.linalg.solve(a_mat, f_mat))
    real_pos = lam.real[(np.abs(lam.imag) < 1e-9 * np.abs(lam).max()) & (lam.real > 0)]
    if real_pos.size:
        candidates.append(1.0 / real_pos.max())
    d = nm * nm
    comp = np.zeros((2 * d, 2 * d))
    comp[:d, :d] = 0.5 * a_mat
    comp[:d, d:] = -0.5 * f_mat
    comp[d:, :d] = np.eye(d)
    clam = np.linalg.eigvals(comp)
    creal = clam.real[(np.abs(clam.imag) < 1e-9 * max(np.abs(clam).max(), 1.0))
                      & (clam.real > 0)]
    if creal.size:
        candidates.append(1.0 / creal.max())
    if not candidates:
        raise TheoryError("companion form produced no positive real eigenvalues")
    return min(candidates)


# ---------------------------------------------------------------------------
# transient and steady-state MSD
# ---------------------------------------------------------------------------

def mean_weight_error(moments: MomentSet, net: NetworkMatrices, mu: float,
                      n_iter: int) -> np.ndarray:
    """E{w~(n)} after n_iter steps of the mean recursion, from E{w~(0)} = w*."""
    g1 = net.g @ (np.eye(moments.nm) - mu * moments.ez)
    zeta = net.zeta(mu, moments.eta)
    wt = net.w_star.copy()
    for _ in range(n_iter):
        wt = g1 @ wt + zeta
    return wt


def mean_weight_error_fixed_point(moments: MomentSet, net: NetworkMatrices,
                                  mu: float) -> np.ndarray:
    """Fixed point (I - G[I - mu E{Z}])^-1 zeta of the mean recursion."""
    g1 = net.g @ (np.eye(moments.nm) - mu * moments.ez)
    return np.linalg.solve(np.eye(moments.nm) - g1, net.zeta(mu, moments.eta))


def transient_msd(moments: MomentSet, net: NetworkMatrices, mu: float,
                  iterations: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Theoretical network MSD sequence for n = 0..iterations (linear scale).

    Propagates the weight-error covariance jointly with the mean weight-error
    vector (the cross terms with the bias drive need it) from the
    zero-initialized-filter start W(0) = w* w*^T.
    """
    nm = moments.nm
    _check_cap(nm, cap)
    g1 = net.g @ (np.eye(nm) - mu * moments.ez)
    zeta = net.zeta(mu, moments.eta)
    ett_g = mu * mu * (net.g @ moments.ett @ net.g.T)
    zz = np.outer(zeta, zeta)
    w_mat = np.outer(net.w_star, net.w_star)
    wt = net.w_star.copy()
    out = np.empty(iterations + 1)
    out[0] = np.trace(w_mat) / net.n_nodes
    for n in range(iterations):
        w1 = g1 @ wt
        drive = np.outer(w1, zeta)
        w_mat = apply_covariance_step(moments, net, w_mat, mu) \
            + drive + drive.T + ett_g + zz
        wt = w1 + zeta
        out[n + 1] = np.trace(w_mat) / net.n_nodes
    return out


def steady_state_msd(moments: MomentSet, net: NetworkMatrices, mu: float,
                     factored: bool = False, cap: int = DEFAULT_CAP) -> float:
    """Steady-state network MSD (linear scale) from the dense fixed-point solve.

    Raises StabilityError when the covariance operator is not a contraction
    at this step size (the steady state then does not exist).
    """
    nm = moments.nm
    _check_cap(nm, cap)
    rho = max(spectral_radius(moments, net, mu), mean_recursion_radius(moments, net, mu))
    if rho >= 1.0:
        raise StabilityError(f"not mean-square stable at mu={mu}: rho={rho:.6f} >= 1")
    f_dense = covariance_operator_dense(moments, net, mu, factored=factored)
    zeta = net.zeta(mu, moments.eta)
    wt_inf = mean_weight_error_fixed_point(moments, net, mu)
    g1 = net.g @ (np.eye(nm) - mu * moments.ez)
    w1 = g1 @ wt_inf
    drive = np.outer(w1, zeta)
    rhs = drive + drive.T + mu * mu * (net.g @ moments.ett @ net.g.T) \
        + np.outer(zeta, zeta)
    x = np.linalg.solve(np.eye(nm * nm) - f_dense, _vec(rhs))
    return float(np.trace(_unvec(x, nm)) / net.n_nodes)


# ---------------------------------------------------------------------------
# portable moment cache (plain-text matrix dumps)
# ---------------------------------------------------------------------------

def save_moments(moments: MomentSet, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    meta = {"n_nodes": moments.n_nodes, "n_sub": moments.n_sub,
            "m_taps": moments.m_taps, "eta": moments.eta,
            "n_draws": moments.n_draws, "rel_std_err": moments.rel_std_err}
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
    fmt = "%.17g"
    np.savetxt(os.path.join(directory, "p_upd.csv"), moments.p_upd, fmt=fmt, delimiter=",")
    np.savetxt(os.path.join(directory, "sigma_g_sub.csv"), moments.sigma_g_sub,
               fmt=fmt, delimiter=",")
    for name, arr in [("ea", moments.ea_blocks), ("eb", moments.eb_blocks),
                      ("s4", moments.s_blocks), ("ett", moments.ett_blocks),
                      ("q", moments.q)]:
        np.savetxt(os.path.join(directory, f"{name}.csv"),
                   arr.reshape(-1, arr.shape[-1]), fmt=fmt, delimiter=",")


def load_moments(directory: str) -> MomentSet:
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    n, n_d, m = meta["n_nodes"], meta["n_sub"], meta["m_taps"]

    def _load(name, shape):
        return np.loadtxt(os.path.join(directory, f"{name}.csv"),
                          delimiter=",", ndmin=2).reshape(shape)

    return MomentSet(
        n_nodes=n, n_sub=n_d, m_taps=m, eta=meta["eta"],
        p_upd=_load("p_upd", (n, n_d)),
        ea_blocks=_load("ea", (n, n_d, m, m)),
        eb_blocks=_load("eb", (n, m, m)),
        s_blocks=_load("s4", (n, m * m, m * m)),
        ett_blocks=_load("ett", (n, m, m)),
        sigma_g_sub=_load("sigma_g_sub", (n, n_d)),
        q=_load("q", (n * m, n * m)),
        n_draws=meta["n_draws"], rel_std_err=meta["rel_std_err"])
