import json
import os
from dataclasses import replace

import numpy as np
import pytest

from mdsaf.harness import (ConfigError, ExperimentConfig, base_n15_config,
                           base_n7_config, build_plan, calibrate_update_probability,
                           complexity_report, empirical_msd, list_presets,
                           preset_path, run_monte_carlo, sweep_steady_state,
                           to_db, tracking_experiment, write_curves_csv,
                           write_sweep_csv)
from mdsaf.network import load_topology_file
from mdsaf.simulate import run_trial

TINY = dict(trials=3, iterations=120, n_d=2, m_taps=4, workers=1)


def test_empirical_msd_trivial():
    w_star = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert empirical_msd(w_star, w_star) == 0.0
    assert empirical_msd(np.zeros((2, 2)), w_star) == pytest.approx(
        (np.sum(w_star[0] ** 2) + np.sum(w_star[1] ** 2)) / 2)


def test_empirical_msd_hand_case():
    w = np.array([[1.0, 0.0], [0.0, 1.0]])
    w_star = np.array([[2.0, 0.0], [0.0, -1.0]])
    # node errors: ||(1,0)||^2 = 1, ||(0,-2)||^2 = 4 -> mean 2.5
    assert empirical_msd(w, w_star) == pytest.approx(2.5)


def test_db_floor():
    assert to_db(0.0) == -300.0
    assert to_db(1.0) == 0.0


def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"stepsize": 0.1})


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(algorithm="md-rls")
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(input_kind="pink")


def test_config_overrides_typed():
    cfg = ExperimentConfig()
    cfg2 = cfg.with_overrides(["mu=0.02", "n_d=8", "algorithm=md-apa", "flip_iter=100"])
    assert cfg2.mu == 0.02 and cfg2.n_d == 8
    assert cfg2.algorithm == "md-apa" and cfg2.flip_iter == 100
    with pytest.raises(ConfigError):
        cfg.with_overrides(["mu"])
    with pytest.raises(ConfigError):
        cfg.with_overrides(["bogus=1"])


def test_config_hash_ignores_execution_fields():
    a = ExperimentConfig(**TINY)
    b = replace(a, workers=7, out="x.csv", dump_signals="y.csv")
    c = replace(a, mu=a.mu * 2)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_config_json_roundtrip(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"mu": 0.01, "trials": 2, "iterations": 50}))
    cfg = ExperimentConfig.from_json_file(p)
    assert cfg.mu == 0.01 and cfg.trials == 2
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json_file(tmp_path / "missing.json")


def test_unresolvable_presets():
    with pytest.raises(ConfigError, match="topology"):
        build_plan(ExperimentConfig(topology="n99"))
    with pytest.raises(ConfigError, match="profile"):
        build_plan(ExperimentConfig(profile="/nonexistent.json"))


def test_run_deterministic_curves():
    cfg = ExperimentConfig(**TINY)
    a = run_monte_carlo(cfg)
    b = run_monte_carlo(cfg)
    assert a.msd_db.tobytes() == b.msd_db.tobytes()
    assert a.config_hash == b.config_hash


def test_csv_byte_identical(tmp_path):
    cfg = ExperimentConfig(**TINY)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_curves_csv(pa, [run_monte_carlo(cfg)])
    write_curves_csv(pb, [run_monte_carlo(cfg)])
    assert pa.read_bytes() == pb.read_bytes()


def test_workers_do_not_change_result():
    cfg = ExperimentConfig(**TINY)
    one = run_monte_carlo(cfg)
    two = run_monte_carlo(replace(cfg, workers=2))
    assert one.msd_db.tobytes() == two.msd_db.tobytes()


def test_adding_trials_preserves_existing_streams():
    plan_a = build_plan(ExperimentConfig(**TINY))
    plan_b = build_plan(replace(ExperimentConfig(**TINY), trials=50))
    ca, _, _ = run_trial(plan_a, 1)
    cb, _, _ = run_trial(plan_b, 1)
    assert ca.tobytes() == cb.tobytes()


def test_mu_zero_flat_curve():
    cfg = ExperimentConfig(mu=0.0, **TINY)
    curve = run_monte_carlo(cfg)
    assert np.all(curve.msd_db == curve.msd_db[0])
    assert not curve.diverged


def test_divergence_flag_and_exit_state():
    cfg = ExperimentConfig(algorithm="md-lms", mu=5.0, **TINY)
    curve = run_monte_carlo(cfg)
    assert curve.diverged
    assert np.all(np.isfinite(curve.msd_db))


def test_tracking_matches_plain_run_when_no_flip():
    cfg = ExperimentConfig(**TINY)
    a = tracking_experiment(cfg)
    b = run_monte_carlo(cfg)
    assert a.msd_db.tobytes() == b.msd_db.tobytes()


def test_tracking_flip_jump_arithmetic():
    # converged filter, flip at 1500: MSD right after the flip ~ mean ||2 w*||^2
    cfg = base_n7_config("white", mu=0.03, n_d=2, iterations=3000, trials=8,
                         flip_iter=1500, workers=1)
    plan = build_plan(cfg)
    curve = tracking_experiment(cfg)
    predicted_db = float(to_db(4.0 * np.mean(np.sum(plan.targets.w_star ** 2, axis=1))))
    assert curve.msd_db[1500] == pytest.approx(predicted_db, abs=0.5)
    # and it re-converges afterwards
    assert curve.msd_db[-1] < curve.msd_db[1500] - 10.0


def test_pilot_calibration_shape():
    cfg = base_n7_config("white", n_d=2, workers=1)
    freq = calibrate_update_probability(cfg, trials=2, iterations=600, tail=200)
    assert freq.shape == (7, 2)
    assert np.all((freq >= 0) & (freq <= 1))
    with pytest.raises(ConfigError):
        calibrate_update_probability(replace(cfg, algorithm="md-apa"))


def test_comparison_parameter_presets():
    assert base_n15_config("white", "md-nmsaf").mu == 0.017
    assert base_n15_config("white", "md-nmsaf").n_d == 4
    assert base_n15_config("white", "md-nmsaf").eta == 0.01
    assert base_n15_config("ar1", "md-nmsaf").mu == 0.015
    assert base_n15_config("ar2", "md-nmsaf").mu == 0.018
    assert base_n15_config("ar2", "md-apm").mu == 0.0065
    assert base_n15_config("white", "md-apmcc").sigma_mcc == 4.0
    assert base_n15_config("ar1", "md-apa").p_r == 0.001
    assert base_n15_config("white", "md-apa").p_r == 0.01
    assert base_n15_config("white", "md-apa").kappa == 1e4


def _table1_nmsaf(topo, m, nd):
    mult = sum((len(topo.inter_neighbors(k)) + len(topo.intra_neighbors(k)) + nd + 2) * m + 2
               for k in range(topo.n_nodes))
    add = sum((len(topo.inter_neighbors(k)) + len(topo.intra_neighbors(k)) + 2 * nd - 1) * m - nd
              for k in range(topo.n_nodes))
    return mult, add


def test_complexity_formulas_exact():
    topo, _ = load_topology_file(preset_path("topo_n15.json"))
    rep = complexity_report("md-nmsaf", 16, 4, 2, topo)
    mult, add = _table1_nmsaf(topo, 16, 4)
    assert rep["multiplications"] == mult
    assert rep["additions"] == add
    assert rep["dmi"] == "0"
    rep_apa = complexity_report("md-apa", 16, 4, 2, topo)
    assert rep_apa["dmi"].startswith("O(P^3)")
    # MD-APMCC adds 6P multiplications per node over MD-APA
    rep_mcc = complexity_report("md-apmcc", 16, 4, 2, topo)
    assert rep_mcc["multiplications"] - rep_apa["multiplications"] == 6 * 2 * topo.n_nodes
    assert rep_mcc["additions"] == rep_apa["additions"]


def test_complexity_ap_grows_cubically():
    topo, _ = load_topology_file(preset_path("topo_n7.json"))
    m2 = complexity_report("md-apm", 16, 4, 2, topo)["multiplications"]
    m4 = complexity_report("md-apm", 16, 4, 4, topo)["multiplications"]
    expected_delta = sum((4 ** 2 - 2 ** 2 + 2 * (4 - 2)) * 16 + (4 ** 3 - 2 ** 3) + (4 ** 2 - 2 ** 2)
                         for _ in range(topo.n_nodes))
    assert m4 - m2 == expected_delta


def test_complexity_nmsaf_close_to_lms_for_small_nd():
    topo, _ = load_topology_file(preset_path("topo_n15.json"))
    lms = complexity_report("md-lms", 16, 1, 2, topo)["multiplications"]
    nmsaf = complexity_report("md-nmsaf", 16, 1, 2, topo)["multiplications"]
    assert nmsaf / lms < 1.5


def test_sweep_micro(tmp_path):
    cfg = ExperimentConfig(trials=2, iterations=300, m_taps=4, workers=1, mu=0.01)
    rows = sweep_steady_state(cfg, [0.01, 0.03], [2], n_draws=1200, p_mode="analytic")
    assert len(rows) == 2
    assert all(np.isfinite(r["theory_db"]) for r in rows)
    assert all(not r["diverged"] for r in rows)
    out = tmp_path / "sweep.csv"
    write_sweep_csv(out, rows)
    header = out.read_text().splitlines()[0]
    assert header == "mu,n_d,sim_db,theory_db,diverged"


def test_curve_csv_schema(tmp_path):
    cfg = ExperimentConfig(**TINY)
    curve = run_monte_carlo(cfg)
    out = tmp_path / "c.csv"
    write_curves_csv(out, [curve])
    lines = out.read_text().splitlines()
    assert lines[0] == "n,msd_db,algorithm,mu,n_d"
    assert len(lines) == cfg.iterations + 1
    assert lines[1].startswith("0,")


def test_dump_signals(tmp_path):
    out = tmp_path / "sig.csv"
    cfg = ExperimentConfig(dump_signals=str(out), **TINY)
    run_monte_carlo(cfg)
    header = out.read_text().splitlines()[0]
    assert header == "node,t,u,v,d"


def test_list_presets():
    info = list_presets()
    assert "n7" in info["topologies"] and "n15" in info["topologies"]
