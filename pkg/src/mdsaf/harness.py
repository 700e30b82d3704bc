"""Monte-Carlo experiment harness: configs, runners, presets, reports, CSV.

Experiments are described by an ExperimentConfig (JSON-mirrorable).  Trials
are independent simulations with seeds derived from the master seed, so the
ensemble is reproducible byte-for-byte regardless of worker count, and
adding trials never perturbs existing ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .algorithms import ALGORITHMS, StepConfig
from .filterbank import design_bank, load_bank_file
from .network import combination_weights, generate_targets, load_topology_file
from .signals import InputModel, NoiseModel, load_profile
from .simulate import PILOT_TRIAL_BASE, TARGET_KEY, RunPlan, raw_streams, run_trial
from . import theory

DB_FLOOR = -300.0
DIVERGENCE_DB = 50.0
_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


def to_db(x):
    """10 log10 with a -300 dB floor to keep CSV output finite."""
    x = np.maximum(np.asarray(x, dtype=float), 1e-30)
    return 10.0 * np.log10(x)


def empirical_msd(w: np.ndarray, w_star: np.ndarray) -> float:
    """Network MSD (linear): mean over nodes of ||w*_k - w_k||^2."""
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w.shape != w_star.shape:
        raise ValueError(f"shape mismatch {w.shape} vs {w_star.shape}")
    diff = w_star - w
    return float(np.mean(np.sum(diff * diff, axis=-1)))


@dataclass
class ExperimentConfig:
    """Full description of one Monte-Carlo experiment (JSON-mirrorable)."""

    topology: str = "n7"             # preset name or path to a topology file
    profile: str = None              # per-node variance profile (default per preset)
    input_kind: str = "white"        # white | ar1 | ar2
    beta1: float = 0.95
    beta2: float = 0.1
    beta3: float = 0.8
    p_r: float = 0.001
    kappa: float = 1e3
    algorithm: str = "md-nmsaf"
    mu: float = 0.005
    eta: float = 0.01
    eps_reg: float = 1e-6
    n_d: int = 4
    p_order: int = 2
    sigma_mcc: float = 4.0
    k_xi: float = 2.576
    thr_gamma: float = 0.99
    n_w: int = 5
    sigma0_sq: float = 1.0
    m_taps: int = 8
    iterations: int = 50_000
    trials: int = 200
    seed: int = 20240801
    flip_iter: int = None            # tracking sign-flip iteration (None = off)
    bank_file: str = None
    workers: int = 0                 # 0 = auto (cpu count)
    dump_signals: str = None
    out: str = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; one of {ALGORITHMS}")
        if self.input_kind not in ("white", "ar1", "ar2"):
            raise ConfigError(f"unknown input kind {self.input_kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def with_overrides(self, kv_pairs) -> "ExperimentConfig":
        """Apply 'key=value' overrides with field-typed coercion."""
        doc = asdict(self)
        fields = type(self).__dataclass_fields__
        for pair in kv_pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            key, raw = pair.split("=", 1)
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            doc[key] = _coerce(raw, doc[key], key)
        return ExperimentConfig.from_dict(doc)

    def config_hash(self) -> str:
        doc = asdict(self)
        for transient in ("out", "workers", "dump_signals"):
            doc.pop(transient, None)
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(raw: str, current, key: str):
    if raw.lower() in ("none", "null"):
        return None
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    for typ in (int, float):
        if isinstance(current, typ):
            try:
                return typ(raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc
    if current is None:
        # untyped optional: try int, then float, else string
        for typ in (int, float):
            try:
                return typ(raw)
            except ValueError:
                pass
    return raw


# ---------------------------------------------------------------------------
# preset resolution and plan construction
# ---------------------------------------------------------------------------

def preset_path(name: str) -> str:
    return os.path.join(_DATA_DIR, name)


def list_presets() -> dict:
    topo = sorted(f[5:-5] for f in os.listdir(_DATA_DIR)
                  if f.startswith("topo_") and f.endswith(".json"))
    return {"topologies": topo,
            "experiments": ["fig4-sweep", "fig5-transient", "fig6-transient",
                            "fig7-stability", "fig8-compare", "fig9-tracking"]}


def _resolve_topology(cfg: ExperimentConfig):
    name = cfg.topology
    path = preset_path(f"topo_{name}.json") if not os.path.exists(name) else name
    if not os.path.exists(path):
        raise ConfigError(f"topology preset or file not found: {cfg.topology!r}")
    return load_topology_file(path)


def _resolve_profile(cfg: ExperimentConfig, n_nodes: int) -> dict:
    if cfg.profile:
        path = cfg.profile
    else:
        path = preset_path(f"profile_n{n_nodes}.json")
    if not os.path.exists(path):
        raise ConfigError(f"variance profile not found: {path}")
    prof = load_profile(path)
    if len(prof["sigma_delta_sq"]) != n_nodes or len(prof["sigma_g_sq"]) != n_nodes:
        raise ConfigError(f"profile {path} does not match node count {n_nodes}")
    return prof


def build_models(cfg: ExperimentConfig, n_nodes: int):
    prof = _resolve_profile(cfg, n_nodes)
    input_model = InputModel(kind=cfg.input_kind, sigma_delta_sq=prof["sigma_delta_sq"],
                             beta1=cfg.beta1, beta2=cfg.beta2, beta3=cfg.beta3)
    noise_model = NoiseModel(sigma_g_sq=prof["sigma_g_sq"], p_r=cfg.p_r, kappa=cfg.kappa)
    return input_model, noise_model


def build_plan(cfg: ExperimentConfig) -> RunPlan:
    topo, offsets = _resolve_topology(cfg)
    weights = combination_weights(topo)
    targets = generate_targets(topo, cfg.m_taps, offsets,
                               np.random.SeedSequence(cfg.seed, spawn_key=(TARGET_KEY,)))
    input_model, noise_model = build_models(cfg, topo.n_nodes)
    bank = None
    if cfg.algorithm == "md-nmsaf":
        bank = load_bank_file(cfg.bank_file) if cfg.bank_file else design_bank(cfg.n_d)
    step = StepConfig(mu=cfg.mu, eta=cfg.eta, eps_reg=cfg.eps_reg, n_d=cfg.n_d,
                      p_order=cfg.p_order, sigma_mcc=cfg.sigma_mcc, k_xi=cfg.k_xi,
                      thr_gamma=cfg.thr_gamma, n_w=cfg.n_w, sigma0_sq=cfg.sigma0_sq)
    flip = -1 if cfg.flip_iter is None else int(cfg.flip_iter)
    return RunPlan(topo=topo, weights=weights, targets=targets, algo=cfg.algorithm,
                   cfg=step, input_model=input_model, noise_model=noise_model,
                   iterations=cfg.iterations, master_seed=cfg.seed,
                   m_taps=cfg.m_taps, bank=bank, flip_iter=flip)


# ---------------------------------------------------------------------------
# Monte-Carlo runner
# ---------------------------------------------------------------------------

@dataclass
class MsdCurve:
    """Ensemble-averaged network MSD curve in dB plus run metadata."""

    msd_db: np.ndarray
    trials: int
    config_hash: str
    diverged: bool
    steady_db: float
    algorithm: str = ""
    mu: float = None
    n_d: int = None

    @property
    def iterations(self) -> int:
        return len(self.msd_db)


def _trial_task(args):
    plan, trial = args
    msd, diverged, _ = run_trial(plan, trial)
    return msd, diverged


def _resolve_workers(cfg: ExperimentConfig) -> int:
    if cfg.workers and cfg.workers > 0:
        return cfg.workers
    env = os.environ.get("MDSAF_WORKERS", "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def run_monte_carlo(cfg: ExperimentConfig) -> MsdCurve:
    """Ensemble of independent trials; divergence is flagged, never raised.

    The steady-state readout is the linear-mean MSD over the final 100
    iterations, reported in dB.
    """
    plan = build_plan(cfg)
    workers = min(_resolve_workers(cfg), cfg.trials)
    tasks = [(plan, t) for t in range(cfg.trials)]
    curves = np.empty((cfg.trials, cfg.iterations))
    any_div = False
    if workers <= 1:
        results = map(_trial_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_trial_task, tasks, chunksize=max(1, cfg.trials // (4 * workers)))
    for t, (msd, div) in enumerate(results):
        curves[t] = msd
        any_div = any_div or div
    if workers > 1:
        pool.shutdown()
    if cfg.dump_signals:
        _dump_signals(plan, cfg.dump_signals)
    mean_lin = curves.mean(axis=0)
    msd_db = to_db(mean_lin)
    tail = mean_lin[-min(100, cfg.iterations):]
    steady_db = float(to_db(tail.mean()))
    diverged = bool(any_div or np.any(msd_db > DIVERGENCE_DB))
    return MsdCurve(msd_db=msd_db, trials=cfg.trials, config_hash=cfg.config_hash(),
                    diverged=diverged, steady_db=steady_db, algorithm=cfg.algorithm,
                    mu=cfg.mu, n_d=cfg.n_d if cfg.algorithm == "md-nmsaf" else None)


def tracking_experiment(cfg: ExperimentConfig) -> MsdCurve:
    """Sign-flip tracking run; identical to run_monte_carlo when no flip is set."""
    return run_monte_carlo(cfg)


def _dump_signals(plan: RunPlan, path: str) -> None:
    """Raw (u, v, d) streams of trial 0, for debugging."""
    streams = raw_streams(plan, 0)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["node", "t", "u", "v", "d"])
        for k, (u, v, d) in enumerate(streams):
            for t in range(len(u)):
                wr.writerow([k, t, repr(float(u[t])), repr(float(v[t])), repr(float(d[t]))])


# ---------------------------------------------------------------------------
# theory glue: pilot calibration of the update probabilities
# ---------------------------------------------------------------------------

def calibrate_update_probability(cfg: ExperimentConfig, trials: int = 20,
                                 iterations: int = 2000, tail: int = 500) -> np.ndarray:
    """Empirical pass frequency of |e| < xi per (node, subband).

    Short pilot simulation of the configured experiment; frequencies are
    measured over the final ``tail`` iterations once the filter has settled.
    Pilot trials use a dedicated trial-index range so they never collide with
    the main ensemble's random streams.
    """
    if cfg.algorithm != "md-nmsaf":
        raise ConfigError("update-probability calibration applies to md-nmsaf only")
    pilot_cfg = replace(cfg, iterations=iterations, trials=trials)
    plan = build_plan(pilot_cfg)
    freq = None
    for t in range(trials):
        _, _, f = run_trial(plan, PILOT_TRIAL_BASE + t, collect_pass=True,
                            tail_from=iterations - tail)
        freq = f if freq is None else freq + f
    return freq / trials


def compute_moments(cfg: ExperimentConfig, n_draws: int = 20_000,
                    p_mode: str = "pilot"):
    """MomentSet + NetworkMatrices for the configured experiment.

    p_mode: "pilot" runs the calibration simulation; "analytic" uses the
    normal-CDF fallback probability.
    """
    plan = build_plan(cfg)
    if p_mode == "pilot":
        p_upd = calibrate_update_probability(cfg)
    elif p_mode == "analytic":
        p_upd = None
    else:
        raise ConfigError(f"unknown p_mode {p_mode!r}")
    moments = theory.estimate_moments(
        plan.input_model, plan.noise_model, plan.bank, plan.topo, plan.weights,
        cfg.m_taps, cfg.eta, n_draws=n_draws, seed=cfg.seed, p_upd=p_upd,
        k_xi=cfg.k_xi)
    net = theory.build_network_matrices(plan.topo, plan.weights, plan.targets)
    return moments, net


# ---------------------------------------------------------------------------
# sweep / comparison experiments
# ---------------------------------------------------------------------------

def sweep_steady_state(cfg: ExperimentConfig, mu_grid, nd_grid,
                       n_draws: int = 20_000, p_mode: str = "pilot") -> list:
    """Simulated vs theoretical steady-state MSD over a (mu, N_D) grid.

    Returns one row dict per grid point: mu, n_d, sim_db, theory_db, diverged.
    The theory column is NaN where the dense recursion is capped out or the
    operating point is not mean-square stable.
    """
    rows = []
    for n_d in nd_grid:
        nd_cfg = replace(cfg, n_d=int(n_d))
        try:
            moments, net = compute_moments(nd_cfg, n_draws=n_draws, p_mode=p_mode)
        except theory.TheoryCapError:
            moments, net = None, None
        for mu in mu_grid:
            point = replace(nd_cfg, mu=float(mu))
            curve = run_monte_carlo(point)
            theory_db = float("nan")
            if moments is not None:
                try:
                    theory_db = float(to_db(theory.steady_state_msd(moments, net, float(mu))))
                except theory.TheoryError:
                    pass
            rows.append({"mu": float(mu), "n_d": int(n_d), "sim_db": curve.steady_db,
                         "theory_db": theory_db, "diverged": curve.diverged})
    return rows


# Per-algorithm parameter presets of the N=15 performance comparison, tuned
# per input kind so all algorithms start at a comparable initial rate.  The
# MD-LMS step size is chosen small enough to keep the unnormalized gradient
# stable on these inputs.
COMPARISON_PARAMS = {
    "white": {"md-apa": {"mu": 0.008}, "md-apm": {"mu": 0.009},
              "md-apmcc": {"mu": 0.008, "sigma_mcc": 4.0},
              "md-nmsaf": {"mu": 0.017, "n_d": 4}, "md-lms": {"mu": 0.005},
              "p_r": 0.01},
    "ar1": {"md-apa": {"mu": 0.008}, "md-apm": {"mu": 0.009},
            "md-apmcc": {"mu": 0.008, "sigma_mcc": 4.0},
            "md-nmsaf": {"mu": 0.015, "n_d": 4}, "md-lms": {"mu": 0.005},
            "p_r": 0.001},
    "ar2": {"md-apa": {"mu": 0.008}, "md-apm": {"mu": 0.0065},
            "md-apmcc": {"mu": 0.008, "sigma_mcc": 4.0},
            "md-nmsaf": {"mu": 0.018, "n_d": 4}, "md-lms": {"mu": 0.005},
            "p_r": 0.01},
}


def base_n7_config(input_kind: str = "white", **overrides) -> ExperimentConfig:
    """Theory-verification network: N=7, M=8, CG noise p_r=1e-3, kappa=1e3."""
    doc = dict(topology="n7", input_kind=input_kind, beta1=0.95, beta2=0.1, beta3=0.8,
               p_r=0.001, kappa=1e3, algorithm="md-nmsaf", mu=0.005, eta=0.01,
               n_d=4, m_taps=8, iterations=50_000, trials=200)
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def base_n15_config(input_kind: str = "white", algorithm: str = "md-nmsaf",
                    **overrides) -> ExperimentConfig:
    """Performance-comparison network: N=15, M=16, per-algorithm presets."""
    params = COMPARISON_PARAMS[input_kind]
    doc = dict(topology="n15", input_kind=input_kind, beta1=0.9, beta2=0.1, beta3=0.8,
               p_r=params["p_r"], kappa=1e4, algorithm=algorithm, eta=0.01,
               p_order=2, m_taps=16, iterations=20_000, trials=100)
    doc.update(params[algorithm])
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def comparison_experiment(preset: str, input_kind: str, trials: int = 100,
                          iterations: int = 20_000, seed: int = 20240801,
                          workers: int = 0) -> dict:
    """All five algorithms on the N=15 network with aligned iteration axes.

    preset "fig8" is the plain convergence comparison, "fig9" adds the
    mid-run target sign flip (tracking).  Returns {algorithm: MsdCurve}.
    """
    if preset not in ("fig8", "fig9"):
        raise ConfigError(f"unknown comparison preset {preset!r}")
    flip = iterations // 2 if preset == "fig9" else None
    out = {}
    for algo in ALGORITHMS:
        cfg = base_n15_config(input_kind, algorithm=algo, trials=trials,
                              iterations=iterations, seed=seed, flip_iter=flip,
                              workers=workers)
        out[algo] = run_monte_carlo(cfg)
    return out


# ---------------------------------------------------------------------------
# complexity report (per-iteration operation counts)
# ---------------------------------------------------------------------------

def complexity_report(algorithm: str, m_taps: int, n_d: int, p_order: int,
                      topo) -> dict:
    """Per-iteration multiplication/addition counts and DMI order.

    m_k and n_k are the inter- and intra-cluster neighborhood sizes of node k
    (the intra set includes k itself).
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    m, nd, p = int(m_taps), int(n_d), int(p_order)
    mult = 0
    add = 0
    for k in range(topo.n_nodes):
        mk = len(topo.inter_neighbors(k))
        nk = len(topo.intra_neighbors(k))
        if algorithm == "md-lms":
            mult += (mk + nk + 1) * m + 1
            add += (mk + nk) * m
        elif algorithm in ("md-apa", "md-apm", "md-apmcc"):
            mult += (p * p + 2 * p + mk + nk) * m + p ** 3 + p * p
            if algorithm == "md-apmcc":
                mult += 6 * p
            add += (p * p + 2 * p + 2 * mk + nk - 1) * m + p ** 3
        else:  # md-nmsaf
            mult += (mk + nk + nd + 2) * m + 2
            add += (mk + nk + 2 * nd - 1) * m - nd
    dmi = f"O(P^3), P={p}" if algorithm in ("md-apa", "md-apm", "md-apmcc") else "0"
    return {"algorithm": algorithm, "multiplications": mult, "additions": add,
            "dmi": dmi}


# ---------------------------------------------------------------------------
# CSV output (the published schema consumed by figgen)
# ---------------------------------------------------------------------------

def write_curves_csv(path: str, curves) -> None:
    """Curve schema: n,msd_db[,algorithm][,mu][,n_d] with a header row."""
    curves = list(curves)
    with_algo = any(c.algorithm for c in curves)
    with_mu = any(c.mu is not None for c in curves)
    with_nd = any(c.n_d is not None for c in curves)
    header = ["n", "msd_db"] + (["algorithm"] if with_algo else []) \
        + (["mu"] if with_mu else []) + (["n_d"] if with_nd else [])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for c in curves:
            for n, v in enumerate(c.msd_db):
                row = [n, repr(float(v))]
                if with_algo:
                    row.append(c.algorithm)
                if with_mu:
                    row.append("" if c.mu is None else repr(float(c.mu)))
                if with_nd:
                    row.append("" if c.n_d is None else c.n_d)
                wr.writerow(row)


def write_theory_curve_csv(path: str, msd_linear) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "msd_db"])
        for n, v in enumerate(to_db(msd_linear)):
            wr.writerow([n, repr(float(v))])


def write_sweep_csv(path: str, rows) -> None:
    """Sweep schema: mu,n_d,sim_db,theory_db,diverged."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mu", "n_d", "sim_db", "theory_db", "diverged"])
        for r in rows:
            wr.writerow([repr(float(r["mu"])), r["n_d"], repr(float(r["sim_db"])),
                         repr(float(r["theory_db"])), int(r["diverged"])])
