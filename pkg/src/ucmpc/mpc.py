"""Nominal MPC: exact ZOH discretisation and a condensed QP."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import clarabel
import scipy.linalg as sla
import scipy.sparse as sp

from .linalg import Box, LtiPlant

FEAS_TOL = 1e-7


def discretize(A, B, dt: float):
    """Exact zero-order hold: (e^{A dt}, int_0^dt e^{A s} ds B)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = sla.expm(M * dt)
    return E[:n, :n], E[:n, n:]


@dataclass(frozen=True)
class MpcCost:
    """Quadratic stage cost (Cy x - r)' Qy (Cy x - r) + (u - u_ref)' R (u - u_ref) + du' Rd du.

    du is the first difference (u_k - u_{k-1}) / dt.  Qf, when given, adds a
    terminal penalty on the last predicted output.  With steady_input the input
    is penalised about the steady-state input that holds Cy x = r, so that the
    nominal loop tracks constant references without offset.
    """

    Qy: np.ndarray
    R: np.ndarray
    Rd: np.ndarray | None = None
    Cy: np.ndarray | None = None
    Qf: np.ndarray | None = None
    u_ref: np.ndarray | None = None
    steady_input: bool = False


def steady_state_target(A, B, Cy, r):
    """(x_ss, u_ss) with A x + B u = 0 and Cy x = r, least squares if not square."""
    n, m = B.shape
    p = Cy.shape[0]
    M = np.block([[A, B], [Cy, np.zeros((p, m))]])
    sol = np.linalg.lstsq(M, np.concatenate([np.zeros(n), r]), rcond=None)[0]
    return sol[:n], sol[n:]


class QpBackend:
    """min 0.5 z'Pz + q'z  s.t. l <= Az <= u."""

    def solve(self, P, q, A, l, u, warm=None):
        raise NotImplementedError


class ClarabelBackend(QpBackend):
    """Interior-point backend; two-sided rows become pairs of non-negative cone rows."""

    def __init__(self, tol: float = 1e-9, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, P, q, A, l, u, warm=None):
        A = np.asarray(A, dtype=float)
        eq = np.isfinite(l) & np.isfinite(u) & (np.abs(u - l) <= 1e-14)
        up = np.isfinite(u) & ~eq
        lo = np.isfinite(l) & ~eq
        Ac = np.vstack([A[eq], A[up], -A[lo]])
        b = np.concatenate([u[eq], u[up], -l[lo]])
        cones = []
        if eq.any():
            cones.append(clarabel.ZeroConeT(int(eq.sum())))
        if up.any() or lo.any():
            cones.append(clarabel.NonnegativeConeT(int(up.sum() + lo.sum())))
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.tol_gap_abs = st.tol_gap_rel = st.tol_feas = self.tol
        st.tol_ktratio = 1e-8
        st.max_iter = self.max_iter
        solver = clarabel.DefaultSolver(sp.triu(sp.csc_matrix(P), format="csc"), np.asarray(q, float),
                                        sp.csc_matrix(Ac), b, cones, st)
        r = solver.solve()
        status = str(r.status)
        x = np.asarray(r.x)
        if status in ("Solved", "AlmostSolved"):
            return "solved", x
        if status == "InsufficientProgress" and np.all(np.isfinite(x)):
            # accept when the point is primal feasible; optimality is then within the last gap
            res = Ac @ x - b
            if np.all(res[: int(eq.sum())] ** 2 <= 1e-14) and np.all(res[int(eq.sum()):] <= 1e-7):
                return "solved", x
        if "Infeasible" in status:
            return "infeasible", None
        return "fault:" + status, None


@dataclass
class MpcProblem:
    plant: LtiPlant
    Tf: float
    dt: float
    cost: MpcCost
    Xn: Box
    Un: Box
    Xf: Box | None = None
    reference: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        N = self.Tf / self.dt
        if abs(N - round(N)) > 1e-9 or round(N) < 1:
            raise ValueError("Tf must be a positive integer multiple of dt")

    @property
    def N(self) -> int:
        return int(round(self.Tf / self.dt))

    @cached_property
    def Cy(self) -> np.ndarray:
        return self.plant.C if self.cost.Cy is None else np.atleast_2d(self.cost.Cy)

    @cached_property
    def discrete(self):
        return discretize(self.plant.A, self.plant.B, self.dt)

    @cached_property
    def prediction(self):
        """(Phi, Gamma) with stacked x_{1..N} = Phi x0 + Gamma u_{0..N-1}."""
        Ad, Bd = self.discrete
        n, m, N = self.plant.n, self.plant.m, self.N
        Phi = np.zeros((N * n, n))
        Gam = np.zeros((N * n, N * m))
        P = np.eye(n)
        powers = []
        for k in range(N):
            P = Ad @ P
            Phi[k * n:(k + 1) * n] = P
            powers.append(P)
        AB = [np.eye(n) @ Bd] + [Pk @ Bd for Pk in powers[:-1]]
        for k in range(N):
            for j in range(k + 1):
                Gam[k * n:(k + 1) * n, j * m:(j + 1) * m] = AB[k - j]
        return Phi, Gam

    @cached_property
    def _steady_map(self):
        n, m = self.plant.n, self.plant.m
        p = self.Cy.shape[0]
        M = np.block([[self.plant.A, self.plant.B], [self.Cy, np.zeros((p, m))]])
        return np.linalg.pinv(M)[n:, n:]

    def steady_inputs(self, r_stack: np.ndarray) -> np.ndarray:
        """Stacked steady-state inputs for a stacked output reference."""
        p = self.Cy.shape[0]
        return (r_stack.reshape(self.N, p) @ self._steady_map.T).ravel()

    def ref_stack(self, t_now: float) -> np.ndarray:
        p = self.Cy.shape[0]
        if self.reference is None:
            return np.zeros(self.N * p)
        return np.concatenate([np.asarray(self.reference(t_now + (k + 1) * self.dt), float).reshape(p)
                               for k in range(self.N)])


@dataclass
class MpcSolution:
    u_seq: np.ndarray
    x_seq: np.ndarray
    objective: float
    status: str
    slack: float = 0.0
    solve_time: float = 0.0
    slack_seq: np.ndarray | None = field(default=None, repr=False)


def _cost_matrices(prob: MpcProblem, x0, t_now, u_prev):
    """Quadratic cost in the stacked inputs: 0.5 U'HU + g'U + const."""
    n, m, N, dt = prob.plant.n, prob.plant.m, prob.N, prob.dt
    Phi, Gam = prob.prediction
    c = prob.cost
    Cy = prob.Cy
    p = Cy.shape[0]
    Cbig = np.kron(np.eye(N), Cy)
    Qbig = np.kron(np.eye(N), np.atleast_2d(c.Qy) * dt)
    if c.Qf is not None:
        Qbig[-p:, -p:] += np.atleast_2d(c.Qf)
    r = prob.ref_stack(t_now)
    e0 = Cbig @ Phi @ x0 - r
    G = Cbig @ Gam
    H = 2 * G.T @ Qbig @ G
    g = 2 * G.T @ Qbig @ e0
    const = float(e0 @ Qbig @ e0)
    R = np.atleast_2d(c.R) * dt
    if c.steady_input:
        uss = prob.steady_inputs(r)
    else:
        u_ref = np.zeros(m) if c.u_ref is None else np.asarray(c.u_ref, float)
        uss = np.tile(u_ref, N)
    Rbig = np.kron(np.eye(N), R)
    H += 2 * Rbig
    g += -2 * Rbig @ uss
    const += float(uss @ Rbig @ uss)
    if c.Rd is not None and np.any(c.Rd):
        Rd = np.atleast_2d(c.Rd) / dt
        D = np.eye(N * m) - np.eye(N * m, k=-m)
        d0 = np.zeros(N * m)
        if u_prev is None:
            D[:m, :m] = 0.0
        else:
            d0[:m] = -np.asarray(u_prev, float)
        Rb = np.kron(np.eye(N), Rd)
        H += 2 * D.T @ Rb @ D
        g += 2 * D.T @ Rb @ d0
        const += float(d0 @ Rb @ d0)
    return H, g, const


def _state_rows(prob: MpcProblem, extra):
    """Rows S with lo <= S x_k <= hi applied at every predicted stage."""
    n = prob.plant.n
    rows, lo, hi = [np.eye(n)], [prob.Xn.lo], [prob.Xn.hi]
    if extra is not None:
        G, h = extra
        G = np.atleast_2d(G)
        rows.append(G)
        lo.append(np.full(G.shape[0], -np.inf))
        hi.append(np.asarray(h, float).reshape(-1))
    return np.vstack(rows), np.concatenate(lo), np.concatenate(hi)


def _solve(prob: MpcProblem, x0, t_now, u_prev=None, extra=None, soft_penalty=None,
           backend: QpBackend | None = None) -> MpcSolution:
    backend = backend or ClarabelBackend()
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float)
    n, m, N = prob.plant.n, prob.plant.m, prob.N
    if prob.Xn.empty or prob.Un.empty:
        return MpcSolution(np.zeros((N, m)), np.zeros((N + 1, n)), np.inf, "infeasible")
    S, slo, shi = _state_rows(prob, extra)
    ns = S.shape[0]
    if soft_penalty is None and not (np.all(S @ x0 >= slo - FEAS_TOL) and np.all(S @ x0 <= shi + FEAS_TOL)):
        return MpcSolution(np.zeros((N, m)), np.tile(x0, (N + 1, 1)), np.inf, "infeasible")
    Phi, Gam = prob.prediction
    H, g, const = _cost_matrices(prob, x0, t_now, u_prev)
    # scale inputs by the half-width of Un for conditioning
    hw = prob.Un.halfwidth
    scale = np.where(np.isfinite(hw) & (hw > 0), hw, 1.0)
    Dsc = np.tile(scale, N)
    Hs = H * np.outer(Dsc, Dsc)
    gs = g * Dsc
    Sbig = np.kron(np.eye(N), S)
    SG = (Sbig @ Gam) * Dsc[None, :]
    Sx0 = Sbig @ Phi @ x0
    rows_lo = np.tile(slo, N) - Sx0
    rows_hi = np.tile(shi, N) - Sx0
    if prob.Xf is not None:
        Sf = np.hstack([np.zeros((n, (N - 1) * n)), np.eye(n)])
        SG = np.vstack([SG, (Sf @ Gam) * Dsc[None, :]])
        rows_lo = np.concatenate([rows_lo, prob.Xf.lo - Sf @ Phi @ x0])
        rows_hi = np.concatenate([rows_hi, prob.Xf.hi - Sf @ Phi @ x0])
    nrow = SG.shape[0]
    keep = np.isfinite(rows_lo) | np.isfinite(rows_hi)
    u_lo = np.tile(prob.Un.lo, N) / Dsc
    u_hi = np.tile(prob.Un.hi, N) / Dsc
    nu = N * m
    if soft_penalty is None:
        A = np.vstack([SG[keep], np.eye(nu)])
        l = np.concatenate([rows_lo[keep], u_lo])
        u = np.concatenate([rows_hi[keep], u_hi])
        P, q = Hs, gs
    else:
        # one slack per state row and stage, plus the stage-0 violation
        nsl = nrow
        A_state = np.hstack([SG, np.eye(nrow)])
        A_state2 = np.hstack([SG, -np.eye(nrow)])
        A = np.vstack([A_state, A_state2,
                       np.hstack([np.eye(nu), np.zeros((nu, nsl))]),
                       np.hstack([np.zeros((nsl, nu)), np.eye(nsl)])])
        big = np.inf
        l = np.concatenate([np.where(np.isfinite(rows_lo), rows_lo, -big), np.full(nrow, -big), u_lo,
                            np.zeros(nsl)])
        u = np.concatenate([np.full(nrow, big), np.where(np.isfinite(rows_hi), rows_hi, big), u_hi,
                            np.full(nsl, big)])
        P = sp.block_diag([Hs, sp.csc_matrix((nsl, nsl))]).toarray()
        q = np.concatenate([gs, np.full(nsl, float(soft_penalty))])
    P = 0.5 * (P + P.T)
    status, z = backend.solve(P, q, A, l, u)
    dt_solve = time.perf_counter() - t0
    if status != "solved":
        return MpcSolution(np.zeros((N, m)), np.tile(x0, (N + 1, 1)), np.inf, status, solve_time=dt_solve)
    U = z[:nu] * Dsc
    U = np.clip(U, np.tile(prob.Un.lo, N), np.tile(prob.Un.hi, N))
    X = np.vstack([x0, (Phi @ x0 + Gam @ U).reshape(N, n)])
    obj = float(0.5 * U @ H @ U + g @ U + const)
    sl = 0.0
    slack_seq = None
    if soft_penalty is not None:
        viol = np.maximum(S @ X.T - shi[:, None], slo[:, None] - S @ X.T)
        slack_seq = np.maximum(viol, 0.0).T
        sl = float(np.max(slack_seq))
        obj += float(soft_penalty) * float(np.sum(slack_seq[1:]))
    return MpcSolution(U.reshape(N, m), X, obj, "solved", sl, dt_solve, slack_seq)


def solve_mpc(problem: MpcProblem, x0, t_now: float = 0.0, u_prev=None, extra=None,
              backend=None) -> MpcSolution:
    """Hard-constrained nominal MPC.  Returns status 'infeasible' rather than raising."""
    return _solve(problem, x0, t_now, u_prev, extra, None, backend)


def solve_mpc_soft(problem: MpcProblem, x0, t_now: float = 0.0, penalty: float = 1e4, u_prev=None,
                   extra=None, backend=None) -> MpcSolution:
    """State constraints softened with linearly penalised slacks (always feasible)."""
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    return _solve(problem, x0, t_now, u_prev, extra, penalty, backend)


def check_solution(problem: MpcProblem, sol: MpcSolution, tol: float = FEAS_TOL, extra=None) -> dict:
    """Dynamics residual and constraint slack of a solved plan."""
    Ad, Bd = problem.discrete
    X, U = sol.x_seq, sol.u_seq
    dyn = float(np.max(np.abs(X[1:] - X[:-1] @ Ad.T - U @ Bd.T))) if len(U) else 0.0
    S, slo, shi = _state_rows(problem, extra)
    sx = X[1:] @ S.T
    xv = float(max(np.max(sx - shi), np.max(slo - sx), 0.0))
    uv = float(max(np.max(U - problem.Un.hi), np.max(problem.Un.lo - U), 0.0))
    return {"dynamics": dyn, "state_violation": xv, "input_violation": uv,
            "ok": dyn <= tol and xv <= tol and uv <= tol}
