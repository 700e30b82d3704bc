"""Command-line interface.

Subcommands mirror the experiment families: ``run`` (single experiment),
``sweep`` (steady-state grid with theory overlay), ``compare`` (five-algorithm
comparison), ``theory`` (bounds and theoretical curves), ``complexity``
(operation-count table), ``presets`` (list shipped presets).

Exit codes: 0 success, 2 divergence detected, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import harness, theory
from .harness import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config field")
    p.add_argument("--topology", help="topology preset name or file")
    p.add_argument("--bank-file", help="analysis-bank coefficient file")
    p.add_argument("--dump-signals", help="dump trial-0 raw signals to CSV")
    p.add_argument("--out", help="output CSV path")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json_file(args.config) if args.config \
        else ExperimentConfig()
    flags = {}
    for attr in ("topology", "bank_file", "dump_signals", "out"):
        val = getattr(args, attr, None)
        if val is not None:
            flags[attr] = val
    if flags:
        cfg = replace(cfg, **flags)
    if args.overrides:
        cfg = cfg.with_overrides(args.overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    curve = harness.tracking_experiment(cfg) if cfg.flip_iter is not None \
        else harness.run_monte_carlo(cfg)
    out = cfg.out or "msd.csv"
    harness.write_curves_csv(out, [curve])
    print(f"{cfg.algorithm}: {cfg.trials} trials x {cfg.iterations} iterations -> {out}")
    print(f"steady-state MSD = {curve.steady_db:.2f} dB"
          + ("  [DIVERGED]" if curve.diverged else ""))
    return EXIT_DIVERGED if curve.diverged else EXIT_OK


def _parse_grid(text: str, typ):
    try:
        return [typ(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    mu_grid = _parse_grid(args.mu_grid, float)
    nd_grid = _parse_grid(args.nd_grid, int)
    rows = harness.sweep_steady_state(cfg, mu_grid, nd_grid,
                                      n_draws=args.n_draws, p_mode=args.p_mode)
    out = cfg.out or "sweep.csv"
    harness.write_sweep_csv(out, rows)
    for r in rows:
        print(f"mu={r['mu']:<8g} N_D={r['n_d']:<2d} sim={r['sim_db']:.2f} dB "
              f"theory={r['theory_db']:.2f} dB" + ("  [DIVERGED]" if r["diverged"] else ""))
    print(f"-> {out}")
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def _cmd_compare(args) -> int:
    curves = harness.comparison_experiment(args.preset, args.input,
                                           trials=args.trials,
                                           iterations=args.iterations,
                                           seed=args.seed)
    out = args.out or f"{args.preset}_{args.input}.csv"
    harness.write_curves_csv(out, curves.values())
    for name, c in curves.items():
        print(f"{name:<10s} steady-state {c.steady_db:7.2f} dB"
              + ("  [DIVERGED]" if c.diverged else ""))
    print(f"-> {out}")
    return EXIT_DIVERGED if any(c.diverged for c in curves.values()) else EXIT_OK


def _cmd_theory(args) -> int:
    cfg = _load_config(args)
    cache = None
    if args.cache_dir:
        cache = os.path.join(args.cache_dir, cfg.config_hash())
    if cache and os.path.exists(os.path.join(cache, "meta.json")):
        moments = theory.load_moments(cache)
        plan = harness.build_plan(cfg)
        net = theory.build_network_matrices(plan.topo, plan.weights, plan.targets)
    else:
        moments, net = harness.compute_moments(cfg, n_draws=args.n_draws,
                                               p_mode=args.p_mode)
        if cache:
            theory.save_moments(moments, cache)
    mean_bound = theory.mean_step_bound(moments)
    ms_bound = theory.ms_step_bound(moments, net)
    print(f"mean-stability step bound:        {mean_bound:.6g}")
    print(f"mean-square stability step bound: {ms_bound:.6g}")
    try:
        ss = theory.steady_state_msd(moments, net, cfg.mu)
        print(f"steady-state MSD at mu={cfg.mu}:    {float(harness.to_db(ss)):.2f} dB")
    except theory.TheoryError as exc:
        print(f"steady-state MSD at mu={cfg.mu}:    unavailable ({exc})")
    if args.iterations > 0:
        curve = theory.transient_msd(moments, net, cfg.mu, args.iterations)
        out = cfg.out or "theory_msd.csv"
        harness.write_theory_curve_csv(out, curve)
        print(f"transient curve (n=0..{args.iterations}) -> {out}")
    return EXIT_OK


def _cmd_complexity(args) -> int:
    cfg = _load_config(args)
    topo, _ = harness._resolve_topology(cfg)
    algos = [args.algorithm] if args.algorithm else list(harness.ALGORITHMS)
    print(f"N={topo.n_nodes}, M={args.m_taps}, N_D={args.n_d}, P={args.p_order}")
    print(f"{'algorithm':<10s} {'multiplications':>16s} {'additions':>12s}  DMI")
    for algo in algos:
        rep = harness.complexity_report(algo, args.m_taps, args.n_d, args.p_order, topo)
        print(f"{rep['algorithm']:<10s} {rep['multiplications']:>16d} "
              f"{rep['additions']:>12d}  {rep['dmi']}")
    return EXIT_OK


def _cmd_presets(args) -> int:
    info = harness.list_presets()
    if args.action == "list":
        print("topology presets: " + ", ".join(info["topologies"]))
        print("experiment presets: " + ", ".join(info["experiments"]))
        return EXIT_OK
    raise ConfigError(f"unknown presets action {args.action!r}")


def _cmd_show_config(args) -> int:
    cfg = _load_config(args)
    print(json.dumps(asdict(cfg), indent=1, sort_keys=True))
    print(f"# config hash: {cfg.config_hash()}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdsaf", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single Monte-Carlo experiment")
    _add_config_args(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="steady-state (mu, N_D) grid with theory overlay")
    _add_config_args(p)
    p.add_argument("--mu-grid", default="0.004,0.0071,0.0126,0.0225,0.04")
    p.add_argument("--nd-grid", default="2,4,8")
    p.add_argument("--n-draws", type=int, default=20_000)
    p.add_argument("--p-mode", choices=("pilot", "analytic"), default="pilot")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="five-algorithm comparison on the N=15 network")
    p.add_argument("--preset", choices=("fig8", "fig9"), default="fig8")
    p.add_argument("--input", choices=("white", "ar1", "ar2"), default="white")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--iterations", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=20240801)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("theory", help="stability bounds and theoretical MSD curves")
    _add_config_args(p)
    p.add_argument("--iterations", type=int, default=0,
                   help="emit the transient curve for n=0..ITERATIONS")
    p.add_argument("--n-draws", type=int, default=20_000)
    p.add_argument("--p-mode", choices=("pilot", "analytic"), default="pilot")
    p.add_argument("--cache-dir", help="cache moment sets keyed by config hash")
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("complexity", help="per-iteration operation counts")
    _add_config_args(p)
    p.add_argument("--algorithm", choices=harness.ALGORITHMS)
    p.add_argument("--m-taps", type=int, default=16)
    p.add_argument("--n-d", type=int, default=4)
    p.add_argument("--p-order", type=int, default=2)
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("presets", help="list shipped presets")
    p.add_argument("action", nargs="?", default="list")
    p.set_defaults(func=_cmd_presets)

    p = sub.add_parser("show-config", help="print the resolved config as JSON")
    _add_config_args(p)
    p.set_defaults(func=_cmd_show_config)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except theory.TheoryError as exc:
        print(f"theory error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
