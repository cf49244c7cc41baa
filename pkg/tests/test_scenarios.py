import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucmpc.linalg import decompose_uncertainty
from ucmpc.scenarios import BUILTINS, load_scenario, scenario_hash


def test_hash_is_stable_and_sensitive():
    a = load_scenario("scalar")
    b = load_scenario("scalar")
    assert a.hash == b.hash
    assert load_scenario("scalar", {"kf": 51.0}).hash != a.hash
    assert load_scenario("f16").hash != load_scenario("f16-siso").hash


def test_hash_ignores_key_order():
    assert scenario_hash("s", {"a": 1, "b": [1, 2]}) == scenario_hash("s", {"b": [1, 2], "a": 1})


def test_unknown_constant_rejected():
    with pytest.raises(KeyError):
        load_scenario("scalar", {"no_such_constant": 1})
    with pytest.raises(KeyError):
        load_scenario("not-a-scenario")


def test_json_config_matches_overrides(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({"scenario": "scalar", "params": {"kf": 80.0}}))
    assert load_scenario(str(cfg)).hash == load_scenario("scalar", {"kf": 80.0}).hash


@pytest.mark.parametrize("name", ["f16", "f16-siso", "scalar"])
def test_builtins_are_consistent(name):
    sc = load_scenario(name)
    n, m = sc.plant.n, sc.plant.m
    assert sc.x0.shape == (n,)
    assert sc.X.contains(sc.x0)
    assert sc.Kx.shape == (m, n)
    assert np.all(np.linalg.eigvals(sc.plant.closed_loop(sc.Kx)).real < 0)


@given(st.floats(0, 15), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_lumped_uncertainty_reassembles(t, a, b, c):
    sc = load_scenario("f16")
    x = np.array([a, b, c])
    ell = sc.lumped(t, x)
    fm, fu = decompose_uncertainty(ell, sc.plant)
    assert np.allclose(sc.plant.B @ fm + sc.plant.Bu @ fu, ell, atol=1e-9)
    # the F-16 uncertainty is independent of the input
    u = np.array([1.0, -2.0])
    assert np.allclose(sc.true_dynamics(t, x, u) - sc.plant.A @ x - sc.plant.B @ u, ell)


@given(st.floats(0, 3), st.floats(-2, 2))
def test_scalar_bounds_cover_uncertainty(t, x):
    sc = load_scenario("scalar")
    ell = sc.lumped(t, [x])
    Z = sc.X
    assert abs(ell[0]) <= sc.bounds.bf_channels(Z)[0] + 1e-12


def test_registry_lists_asteroid_phases():
    assert {"asteroid", "asteroid-phase2"} <= set(BUILTINS)
