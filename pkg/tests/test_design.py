import numpy as np
import pytest
from hypothesis import given, strategies as st

from ucmpc.design import (L1Config, TighteningReport, UncertaintyBounds, design_l1, input_bounds,
                          scale_w, solve_rho_r, stability_margins, tighten, uopt_bound)
from ucmpc.linalg import Box, DesignError, LtiPlant
from ucmpc.norms import FilterBank, compute_norms
from ucmpc.scenarios import load_scenario


def _scalar_bounds(bf=0.5, L=0.2):
    return UncertaintyBounds(lambda Z: np.array([bf + L * Z.max_norm()]), lambda Z: np.array([L]),
                             np.zeros(0))


def test_report_contract(scalar):
    sc, r = scalar
    assert r.Xn.subset_of(sc.X) and r.Un.subset_of(sc.U)
    assert np.all(r.tilde_rho >= r.gamma1)
    assert np.all(r.check_rho_r <= r.rho_r * (1 + 1e-6))
    assert np.allclose(r.Xn.hi, sc.X.hi - r.tilde_rho)
    assert np.allclose(r.tilde_rho_u, r.rho_ua + np.abs(r.Kx) @ r.tilde_rho)
    assert r.T_final <= sc.l1.T_theory
    m_a, m_b = stability_margins(r.norms, sc.bounds, r.rho_r, r.gamma1, r.uopt_bound, sc.X)
    assert m_a > 0 and m_b > 0


def test_report_roundtrip(f16):
    _, r = f16
    back = TighteningReport.from_dict(r.to_dict())
    for k in ("tilde_rho", "rho_ua", "tilde_rho_u", "Kx", "Lambda"):
        assert np.allclose(getattr(back, k), getattr(r, k))
    assert back.norms.to_dict() == r.norms.to_dict() and back.alpha == r.alpha
    assert np.allclose(back.Xn.hi, r.Xn.hi)


def test_rho_r_is_minimal(scalar):
    sc, r = scalar
    # just below the returned value one of the conditions fails
    m = stability_margins(r.norms, sc.bounds, r.rho_r * (1 - 1e-4), r.gamma1, r.uopt_bound, sc.X)
    assert min(m) <= 0 or r.rho_r <= r.norms.rho_in + 2e-6


def test_uopt_bound_forms():
    X, U = Box.symmetric([1.0, 2.0]), Box.symmetric([5.0])
    K = np.array([[1.0, -0.5]])
    assert uopt_bound(U, X, K, "reachable") == pytest.approx(5.0 + 1.0 + 1.0)
    assert uopt_bound(U, X, K, "pontryagin") == pytest.approx(5.0 - 2.0)
    with pytest.raises(DesignError):
        uopt_bound(Box.symmetric([1.0]), X, K, "pontryagin")


@given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=2))
def test_scale_w_normalises(bw):
    p = LtiPlant(np.zeros((3, 3)), [[1.0], [0.0], [0.0]], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if max(bw) == 0:
        return
    with np.errstate(all="ignore"):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Bu, Lam = scale_w(p, bw)
    assert np.max(np.diag(Lam)) == pytest.approx(1.0)
    assert np.allclose(Bu, p.Bu @ Lam)


def test_tighten_reports_axis():
    with pytest.raises(DesignError, match=r"axis \[1\]"):
        tighten(Box.symmetric([1.0, 5.0]), Box.symmetric([1.0]), [2.0, 0.1], [0.1])


def test_input_bounds_formula():
    rho_ua, tu = input_bounds(FilterBank.uniform(1.0, 2), [1.0, 2.0], [[1.0, -1.0], [0.0, 2.0]],
                              [0.5, 0.25], gamma2=0.1)
    assert np.allclose(rho_ua, [1.1, 2.1]) and np.allclose(tu, [1.85, 2.6])


def test_escalation_widens_filter():
    # slow filter fails the Lipschitz condition; the design widens it until it passes
    p = LtiPlant([[1.0]], [[1.0]], np.zeros((1, 0)))
    cfg = L1Config(FilterBank.uniform(0.5, 1), [[-10.0]], gamma1=0.05, T_theory=1e-1, scale_w=False)
    bounds = UncertaintyBounds(lambda Z: np.array([0.1 + 3.0 * min(Z.max_norm(), 0.5)]),
                               lambda Z: np.array([3.0]), np.zeros(0))
    r = design_l1(p, [[-3.0]], bounds, Box.symmetric([20.0]), Box.symmetric([100.0]),
                  Box.omega(0.1, 1), cfg)
    assert r.escalations > 0 and r.filters_final.kf[0] > 0.5
    assert r.norms.g_xm * r.L_f_Xa < 1


def test_infeasible_state_axis():
    sc = load_scenario("scalar", {"X_hw": 0.02})
    with pytest.raises(DesignError):
        design_l1(sc.plant, sc.Kx, sc.bounds, sc.X, sc.U, sc.X0, sc.l1)


def test_solve_rho_r_none_when_unreachable():
    p = LtiPlant([[-1.0]], [[1.0]], np.zeros((1, 0)))
    nt = compute_norms(p, [[-1.0]], FilterBank.uniform(1.0, 1), [[-1.0]], Box.omega(0.1, 1))
    rho, _ = solve_rho_r(nt, _scalar_bounds(100.0, 0.0), 0.01, 1.0, Box.symmetric([1.0]))
    assert rho is None


def test_config_validation():
    with pytest.raises(ValueError):
        L1Config(FilterBank.uniform(1.0, 1), [[1.0]])
    with pytest.raises(ValueError):
        L1Config(FilterBank.uniform(1.0, 1), [[-1.0]], gamma1=0.0)
