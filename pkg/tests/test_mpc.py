import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import cont2discrete

from ucmpc.linalg import Box, LtiPlant
from ucmpc.mpc import (MpcCost, MpcProblem, check_solution, discretize, solve_mpc, solve_mpc_soft,
                       steady_state_target, _cost_matrices)

DI = LtiPlant([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0], [0.0]], C=[[1.0, 0.0]])


def _problem(xhw=(5.0, 2.0), uhw=1.0, ref=None, **cost):
    c = MpcCost(Qy=[[10.0]], R=[[0.1]], **cost)
    return MpcProblem(DI, 2.0, 0.1, c, Box.symmetric(list(xhw)), Box.symmetric([uhw]),
                      reference=ref)


@given(st.floats(0.001, 0.5))
def test_discretize_matches_scipy(dt):
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    B = np.array([[0.0], [1.0]])
    Ad, Bd = discretize(A, B, dt)
    Ad2, Bd2, *_ = cont2discrete((A, B, np.eye(2), np.zeros((2, 1))), dt, method="zoh")
    assert np.allclose(Ad, Ad2, atol=1e-12) and np.allclose(Bd, Bd2, atol=1e-12)


def test_unconstrained_solution_is_linear_solve():
    prob = _problem(xhw=(1e3, 1e3), uhw=1e3)
    x0 = np.array([1.0, -0.5])
    sol = solve_mpc(prob, x0)
    H, g, _ = _cost_matrices(prob, x0, 0.0, None)
    assert np.allclose(sol.u_seq.ravel(), np.linalg.solve(H, -g), atol=1e-6)


@given(st.floats(-4.5, 4.5), st.floats(-1.5, 1.5))
def test_solution_respects_constraints(p0, v0):
    prob = _problem()
    sol = solve_mpc(prob, [p0, v0])
    if sol.status == "solved":
        assert check_solution(prob, sol, tol=1e-6)["ok"]
    else:
        assert sol.status == "infeasible"


def test_infeasible_start_reported_not_raised():
    prob = _problem()
    sol = solve_mpc(prob, [10.0, 0.0])
    assert sol.status == "infeasible"
    soft = solve_mpc_soft(prob, [10.0, 0.0], penalty=100.0)
    assert soft.status == "solved" and soft.slack > 0


def test_extra_rows_enforced():
    prob = _problem()
    G, h = np.array([[1.0, 0.0]]), np.array([0.2])
    sol = solve_mpc(prob, [0.0, 0.3], extra=(G, h))
    assert sol.status == "solved"
    assert np.all(sol.x_seq[1:] @ G.T <= h + 1e-6)


def test_steady_input_removes_offset():
    # x' = -x + u tracks r = 1 only with u = 1; an absolute input penalty leaves an offset
    p = LtiPlant([[-1.0]], [[1.0]], np.zeros((1, 0)))
    ref = lambda t: np.array([1.0])
    out = {}
    for flag in (False, True):
        c = MpcCost(Qy=[[1.0]], R=[[1.0]], steady_input=flag)
        prob = MpcProblem(p, 1.0, 0.05, c, Box.symmetric([10.0]), Box.symmetric([10.0]), reference=ref)
        out[flag] = solve_mpc(prob, [1.0]).u_seq[0, 0]
    assert out[True] == pytest.approx(1.0, abs=1e-5)
    assert out[False] < 0.9
    x, u = steady_state_target(np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([1.0]))
    assert x[0] == pytest.approx(1.0) and u[0] == pytest.approx(1.0)


def test_empty_sets_are_infeasible():
    c = MpcCost(Qy=[[1.0]], R=[[1.0]])
    prob = MpcProblem(DI, 1.0, 0.1, c, Box([1.0, 0.0], [0.0, 0.0]), Box.symmetric([1.0]))
    assert solve_mpc(prob, [0.0, 0.0]).status == "infeasible"
