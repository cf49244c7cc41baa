import numpy as np
import pytest

from ucmpc.design import design_l1
from ucmpc.scenarios import load_scenario
from ucmpc.sim import (SimLog, run_ablation_noua, run_ucmpc, run_vanilla_mpc, simulate,
                       verify_bounds, write_csv)


def test_zero_uncertainty_keeps_state_on_nominal():
    sc = load_scenario("scalar", {"f_amp": 0.0, "f_lin": 0.0})
    r = design_l1(sc.plant, sc.Kx, sc.bounds, sc.X, sc.U, sc.X0, sc.l1)
    log = run_ucmpc(sc, r, duration=1.0, dt_sim=1e-3)
    assert log.ok
    assert np.max(np.abs(log.x - log.x_n)) < 1e-9
    assert np.max(np.abs(log.u_a)) < 1e-9


def test_runs_are_deterministic(scalar):
    sc, r = scalar
    a = run_ucmpc(sc, r, duration=0.5, seed=3)
    b = run_ucmpc(sc, r, duration=0.5, seed=3)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.u, b.u)
    assert sc.X0.contains(a.x[0])


def test_vanilla_has_no_tube_or_adaptation(scalar):
    sc, _ = scalar
    log = run_vanilla_mpc(sc, duration=0.5)
    assert log.ok
    assert np.all(np.isnan(log.x_n))
    assert np.all(log.u_a == 0)
    ver = verify_bounds(log, None, sc)
    assert "tube" not in ver


def test_ablation_disables_adaptive_input(scalar):
    sc, r = scalar
    log = run_ablation_noua(sc, r, duration=0.5)
    assert np.all(log.u_a == 0)
    assert np.allclose(log.u, log.u_bar + (log.x - log.x_n) @ np.atleast_2d(r.Kx).T)


def test_verify_flags_a_breach(scalar):
    sc, r = scalar
    log = run_ucmpc(sc, r, duration=0.3)
    assert verify_bounds(log, r, sc)["all_pass"]
    bad = SimLog(**{**log.__dict__, "x": log.x.copy()})
    bad.x[5] = sc.X.hi + 1.0
    ver = verify_bounds(bad, r, sc)
    assert not ver["x_in_X"]["pass"]
    assert ver["x_in_X"]["t_worst"] == pytest.approx(log.t[5])
    assert not ver["all_pass"]


def test_controller_and_dt_validation(scalar):
    sc, r = scalar
    with pytest.raises(ValueError):
        simulate(sc, r, "pid")
    with pytest.raises(ValueError):
        simulate(sc, None, "ucmpc")
    with pytest.raises(ValueError):
        simulate(sc, r, "ucmpc", duration=0.1, dt_sim=0.003)


def test_csv_columns_and_manifest(scalar, tmp_path):
    sc, r = scalar
    log = run_ucmpc(sc, r, duration=0.2)
    p = write_csv(log, tmp_path / "log.csv", sc, r)
    header = p.read_text().splitlines()[0].split(",")
    for c in ("t", "x1", "xn1", "xhat1", "sighat1", "ua1", "u1", "ubar1", "flag_tube", "flag_ua"):
        assert c in header
    assert p.with_suffix(".manifest.json").exists()
