import csv
import math

import numpy as np
import pytest

from cfisac.experiments import (CSV_HEADER, AggregateRecord, OracleError, SweepSpec, aggregate,
                                brute_force_oracle, config_for, db, desk_config, distance_sweep_geometry,
                                draw_trial, export_csv, run_sweep, run_trial, run_trials)
from cfisac.scenario import LayoutSpec, SystemConfig, build_geometry, trial_rng
from cfisac.sdr import sdr_mcbf

from conftest import realize


def small_spec(**kw):
    args = dict(axis="antennas", values=(4,), trials=2, schemes=("SDR-MCBF", "NSP-RCI"))
    args.update(kw)
    return SweepSpec(**args)


@pytest.mark.parametrize("kw", [dict(axis="height"), dict(values=()), dict(values=(8, 4)),
                                dict(values=(2.5,)), dict(axis="distance", values=(-1.0,)),
                                dict(trials=0), dict(schemes=("ZF",))])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


def test_config_for_axes():
    assert config_for(small_spec(values=(8,)), 8).N == 8
    p = config_for(small_spec(axis="power", values=(10.0,)), 10.0)
    assert p.P_m == pytest.approx((10.0, 10.0))
    assert config_for(small_spec(axis="distance", values=(5.0,)), 5.0) == desk_config()


def test_db_floor():
    assert db(10.0) == pytest.approx(10.0)
    assert db(0.0) == -300.0


def test_distance_geometry():
    cfg = desk_config(Q=2, K=3)
    base = build_geometry(cfg, LayoutSpec(), trial_rng(0, 1))
    g = distance_sweep_geometry(30.0, base)
    assert [0.0, 20.0] in g.user_positions.tolist()
    np.testing.assert_allclose(g.target_center, [0.0, 50.0])
    np.testing.assert_allclose(g.target_positions - g.target_center, base.target_positions - base.target_center)
    g0 = distance_sweep_geometry(0.0, base)
    np.testing.assert_allclose(g0.target_center, [0.0, 20.0])
    with pytest.raises(ValueError):
        distance_sweep_geometry(-1.0, base)


def test_draws_share_channels_across_power_levels():
    spec = small_spec(axis="power", values=(-10.0, 0.0))
    _, a = draw_trial(spec, -10.0, 3)
    _, b = draw_trial(spec, 0.0, 3)
    np.testing.assert_array_equal(a.h, b.h)


def test_run_trial_records():
    spec = small_spec()
    out = run_trial(spec, 4.0, 0)
    assert [r.scheme for r in out] == list(spec.schemes)
    sdr = out[0]
    assert sdr.feasible and sdr.rates_met
    assert sdr.scnr <= sdr.scnr_bound * (1 + 1e-9)
    assert math.isnan(sdr.solve_ms)


def test_infeasible_trials_are_excluded():
    spec = small_spec(base_config=desk_config(P_m=1e-12, R_min=3.0), schemes=("SDR-MCBF",))
    recs = run_sweep(spec)
    assert recs[0].feasible_trials == 0
    assert recs[0].infeasibility_rate == 1.0
    assert math.isnan(recs[0].mean_sinr_db)


def test_single_trial_has_zero_stderr():
    recs = run_sweep(small_spec(trials=1))
    assert all(r.stderr_sinr_db == 0.0 for r in recs if r.feasible_trials == 1)


def test_sweep_is_deterministic_and_sorted(tmp_path):
    spec = small_spec(values=(4, 6))
    a = export_csv(run_sweep(spec), tmp_path / "a.csv").read_bytes()
    b = export_csv(run_sweep(spec), tmp_path / "b.csv").read_bytes()
    assert a == b
    rows = list(csv.reader(a.decode().splitlines()))
    assert tuple(rows[0]) == CSV_HEADER
    keys = [(float(r[1]), r[2]) for r in rows[1:]]
    assert keys == sorted(keys)
    assert len(rows) == 1 + 2 * 2


def test_worker_count_does_not_change_results():
    spec = small_spec(trials=3)
    assert list(map(repr, run_trials(spec, workers=1))) == list(map(repr, run_trials(spec, workers=2)))


def test_export_errors(tmp_path):
    with pytest.raises(ValueError):
        export_csv([], tmp_path / "x.csv")
    rec = aggregate(small_spec(trials=1), run_trials(small_spec(trials=1)))
    with pytest.raises(OSError):
        export_csv(rec, tmp_path / "missing" / "x.csv")


def test_one_record_export(tmp_path):
    rec = AggregateRecord("power", 0.0, "NSP-RCI", 1, 1, 1.0, 0.0, 2.0, 0.0, -10.0, 0.0, float("nan"))
    text = export_csv([rec], tmp_path / "one.csv").read_text()
    assert text.splitlines()[1] == "power,0,NSP-RCI,1,1,1,0,2,0,-10,0,nan"


def test_oracle_on_micro_instance():
    cfg = SystemConfig(R_min=1.0, M_t=1, M_r=1, N=2, K=1, Q=1)
    real = realize(cfg, 5, 0)
    sdr = sdr_mcbf(real, cfg)
    o = brute_force_oracle(real, cfg, 100_000, np.random.default_rng(0))
    assert o.diagnostics["scnr"] <= sdr.diagnostics["scnr_relaxed"] * (1 + 1e-9)
    assert o.diagnostics["scnr"] >= sdr.diagnostics["scnr"] * 0.99


def test_oracle_without_rate_constraint_has_analytic_optimum():
    # R_min = 0: best SCNR is full power on the steering vector
    cfg = SystemConfig(R_min=0.0, M_t=1, M_r=1, N=2, K=1, Q=1, p_q=1.0)
    real = realize(cfg, 6, 0)
    o = brute_force_oracle(real, cfg, 200_000, np.random.default_rng(1))
    exact = cfg.zeta_sens_sq * cfg.P_m[0] * cfg.M_r / float(np.sum(cfg.sigma_w_sq))
    assert o.diagnostics["scnr"] == pytest.approx(exact, rel=0.01)


def test_oracle_errors():
    cfg = SystemConfig(R_min=40.0, M_t=1, M_r=1, N=2, K=1, Q=1)
    real = realize(cfg, 5, 0)
    with pytest.raises(OracleError):
        brute_force_oracle(real, cfg, 1000, np.random.default_rng(0))
    with pytest.raises(ValueError):
        brute_force_oracle(real, cfg, 0, np.random.default_rng(0))
