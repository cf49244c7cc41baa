"""State-feedback synthesis minimising the peak-to-peak gain from w to z.

z = Cz x + Dz u, closed loop x' = (A + B K) x + Bu w.  For fixed lambda the
conditions are LMIs in (V, Y, mu, beta) with K = Y V^{-1}; lambda is found by
a line search.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.linalg as sla

from .linalg import DesignError, LtiPlant, is_hurwitz

EPS = 1e-7
DEFAULT_SOLVERS = ("CLARABEL", "SCS")


def default_lambda_grid(A, npts: int = 40) -> np.ndarray:
    """Uniform grid on (0, 2 |min Re eig(A)| + 1]."""
    cap = 2.0 * abs(float(np.min(np.linalg.eigvals(A).real))) + 1.0
    return np.linspace(cap / npts, cap, npts)


@dataclass(frozen=True)
class PpgProblem:
    plant: LtiPlant
    Cz: np.ndarray
    Dz: np.ndarray
    lambda_grid: np.ndarray = None

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        Cz = np.atleast_2d(np.asarray(self.Cz, dtype=float))
        Dz = np.asarray(self.Dz, dtype=float).reshape(Cz.shape[0], m)
        if Cz.shape[1] != n:
            raise ValueError("Cz has the wrong number of columns")
        grid = default_lambda_grid(self.plant.A) if self.lambda_grid is None else self.lambda_grid
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("lambda grid must be non-empty, positive and ascending")
        object.__setattr__(self, "Cz", Cz)
        object.__setattr__(self, "Dz", Dz)
        object.__setattr__(self, "lambda_grid", grid)

    @property
    def q(self) -> int:
        return self.Cz.shape[0]


@dataclass(frozen=True)
class PpgResult:
    Kx: np.ndarray
    beta: float
    lam: float
    mu: float
    V: np.ndarray
    Y: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"Kx": self.Kx.tolist(), "beta": self.beta, "lambda": self.lam, "mu": self.mu,
                "V": self.V.tolist(), "Y": self.Y.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PpgResult":
        return cls(np.asarray(d["Kx"]), d["beta"], d["lambda"], d["mu"],
                   np.asarray(d["V"]), np.atleast_2d(np.asarray(d["Y"])))


def _sym(M):
    return 0.5 * (M + M.T)


def build_lmi_blocks(problem: PpgProblem, lam: float, V, Y, mu, beta):
    """The two block matrices of the synthesis conditions.

    Works with numpy arrays (numeric check) or cvxpy expressions.  The
    first must be negative definite, the second positive definite.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    p = problem.plant
    n, nw, q = p.n, p.Bu.shape[1], problem.q
    symbolic = any(isinstance(v, cp.Expression) for v in (V, Y, mu, beta))
    bmat = cp.bmat if symbolic else np.block
    AV = p.A @ V + (p.B @ Y if p.m else 0)
    N = problem.Cz @ V + (problem.Dz @ Y if p.m else 0)
    M11 = AV + AV.T + lam * V
    M18 = bmat([[M11, p.Bu], [p.Bu.T, -mu * np.eye(nw)]])
    M19 = bmat([[lam * V, np.zeros((n, nw)), N.T],
                [np.zeros((nw, n)), (beta - mu) * np.eye(nw), np.zeros((nw, q))],
                [N, np.zeros((q, nw)), beta * np.eye(q)]])
    return M18, M19


def lmi_margins(problem: PpgProblem, res: PpgResult) -> tuple[float, float]:
    """(-max eig of block 18, min eig of block 19); both positive when certified."""
    M18, M19 = build_lmi_blocks(problem, res.lam, res.V, res.Y, res.mu, res.beta)
    return -float(np.max(np.linalg.eigvalsh(_sym(M18)))), float(np.min(np.linalg.eigvalsh(_sym(M19))))


def refine_certificate(problem: PpgProblem, lam: float, V, Y, slack: float = 1e-6):
    """Smallest beta certified by (V, Y) at this lambda, after rescaling V, Y.

    Block 18 holds iff M11 < 0 and mu > lmax(Bu^T (-M11)^{-1} Bu); block 19
    holds iff beta > mu and beta > lmax(N (lam V)^{-1} N^T).  Scaling (V, Y)
    by c trades the two terms, balanced at beta = sqrt(mu_min * b).
    Returns (beta, mu, V, Y) or None when (V, Y) does not certify.
    """
    p = problem.plant
    V = _sym(np.asarray(V, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(p.m, p.n)
    M11 = _sym(p.A @ V + p.B @ Y + (p.A @ V + p.B @ Y).T + lam * V)
    if np.max(np.linalg.eigvalsh(M11)) >= 0 or np.min(np.linalg.eigvalsh(V)) <= 0:
        return None
    Bu = p.Bu
    mu_min = float(np.max(np.linalg.eigvalsh(_sym(Bu.T @ np.linalg.solve(-M11, Bu))))) if Bu.size else 0.0
    N = problem.Cz @ V + problem.Dz @ Y
    b = float(np.max(np.linalg.eigvalsh(_sym(N @ np.linalg.solve(lam * V, N.T)))))
    if mu_min <= 0 or b <= 0:
        # degenerate: either no disturbance path or a zero output map
        c = 1.0
        beta_star = max(mu_min, b, 1e-12)
    else:
        c = np.sqrt(mu_min / b)
        beta_star = np.sqrt(mu_min * b)
    mu = beta_star * (1 + slack)
    beta = beta_star * (1 + 2 * slack)
    return float(beta), float(mu), c * V, c * Y


def _solve_sdp(problem: PpgProblem, lam: float, solvers):
    p = problem.plant
    n = p.n
    V = cp.Variable((n, n), symmetric=True)
    Y = cp.Variable((p.m, n)) if p.m else np.zeros((0, n))
    mu = cp.Variable()
    beta = cp.Variable()
    M18, M19 = build_lmi_blocks(problem, lam, V, Y, mu, beta)
    k18, k19 = M18.shape[0], M19.shape[0]
    cons = [(M18 + M18.T) / 2 << -EPS * np.eye(k18), (M19 + M19.T) / 2 >> EPS * np.eye(k19),
            V >> EPS * np.eye(n), mu >= EPS]
    prob = cp.Problem(cp.Minimize(beta), cons)
    for s in solvers:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=s)
        except (cp.SolverError, ValueError):
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and V.value is not None:
            Yv = Y.value if p.m else Y
            return V.value, Yv
        if prob.status in ("infeasible", "infeasible_inaccurate"):
            return None
    return None


def solve_ppg_fixed_lambda(problem: PpgProblem, lam: float, solvers=DEFAULT_SOLVERS):
    """Minimise beta at fixed lambda.  Returns None when infeasible."""
    sol = _solve_sdp(problem, lam, solvers)
    if sol is None:
        return None
    refined = refine_certificate(problem, lam, *sol)
    if refined is None:
        return None
    beta, mu, V, Y = refined
    Kx = Y @ np.linalg.inv(V) if problem.plant.m else np.zeros((0, problem.plant.n))
    return PpgResult(Kx, beta, float(lam), mu, V, Y)


def synthesize_kx(problem: PpgProblem, solvers=DEFAULT_SOLVERS) -> PpgResult:
    """Line search over the lambda grid; smallest beta wins, ties to smallest lambda."""
    best, diag = None, {}
    for lam in problem.lambda_grid:
        r = solve_ppg_fixed_lambda(problem, lam, solvers)
        diag[float(lam)] = None if r is None else r.beta
        if r is not None and not is_hurwitz(problem.plant.closed_loop(r.Kx)):
            diag[float(lam)] = None
            r = None
        if r is not None and (best is None or r.beta < best.beta):
            best = r
    if best is None:
        raise DesignError(f"PPG synthesis infeasible on every lambda: {diag}")
    return PpgResult(best.Kx, best.beta, best.lam, best.mu, best.V, best.Y,
                     {"per_lambda_beta": diag})


def certify_gain(problem: PpgProblem, Kx, lambda_grid=None, solvers=DEFAULT_SOLVERS) -> PpgResult:
    """Certified PPG bound of a fixed gain (analysis form, Y = Kx V)."""
    p = problem.plant
    Kx = np.atleast_2d(np.asarray(Kx, dtype=float))
    if not is_hurwitz(p.closed_loop(Kx)):
        raise DesignError("gain is not stabilising")
    grid = problem.lambda_grid if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    best = None
    n = p.n
    # block 18 needs Am + lam/2 I Hurwitz
    decay = -float(np.max(np.linalg.eigvals(p.closed_loop(Kx)).real))
    for lam in grid[grid < 2.0 * decay]:
        V = cp.Variable((n, n), symmetric=True)
        mu, beta = cp.Variable(), cp.Variable()
        M18, M19 = build_lmi_blocks(problem, lam, V, Kx @ V, mu, beta)
        cons = [(M18 + M18.T) / 2 << -EPS * np.eye(M18.shape[0]),
                (M19 + M19.T) / 2 >> EPS * np.eye(M19.shape[0]), V >> EPS * np.eye(n), mu >= EPS]
        prob = cp.Problem(cp.Minimize(beta), cons)
        for s in solvers:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    prob.solve(solver=s)
            except (cp.SolverError, ValueError):
                continue
            break
        if V.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
            continue
        refined = refine_certificate(problem, lam, V.value, Kx @ V.value)
        if refined is None:
            continue
        b, m_, Vr, Yr = refined
        if best is None or b < best.beta:
            best = PpgResult(Kx, b, float(lam), m_, Vr, Yr)
    if best is None:
        raise DesignError("no lambda certifies the given gain")
    return best


def verify_ppg_by_simulation(result: PpgResult, problem: PpgProblem, trials: int = 100,
                             seed: int = 0, steps: int = 20000, w_zero: bool = False) -> float:
    """Max ||z(t)||_2 over randomised bang-bang disturbances with ||w(t)||_2 <= 1.

    Raises AssertionError if the observed peak exceeds beta.
    """
    p = problem.plant
    Am = p.closed_loop(result.Kx)
    Cl = problem.Cz + problem.Dz @ result.Kx
    nw = p.Bu.shape[1]
    if nw == 0 or w_zero:
        return 0.0
    tau = 1.0 / abs(float(np.max(np.linalg.eigvals(Am).real)))
    horizon = 20.0 * tau
    dt = horizon / steps
    M = np.zeros((p.n + nw, p.n + nw))
    M[: p.n, : p.n] = Am
    M[: p.n, p.n:] = p.Bu
    E = sla.expm(M * dt)
    Ad, Bd = E[: p.n, : p.n], E[: p.n, p.n:]
    rng = np.random.default_rng(seed)
    x = np.zeros((trials, p.n))

    def direction(k):
        d = rng.standard_normal((k, nw)) if nw > 1 else np.sign(rng.standard_normal((k, 1)))
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    w = direction(trials)
    # switch rate of a few per slowest time constant
    p_switch = min(1.0, 3.0 * dt / tau)
    peak = 0.0
    for _ in range(steps):
        x = x @ Ad.T + w @ Bd.T
        peak = max(peak, float(np.max(np.linalg.norm(x @ Cl.T, axis=1))))
        flip = rng.random(trials) < p_switch
        if np.any(flip):
            w[flip] = -w[flip] if nw == 1 else direction(int(flip.sum()))
    if peak > result.beta * (1 + 1e-6):
        raise AssertionError(f"observed peak {peak:.6g} exceeds certified beta {result.beta:.6g}")
    return peak
