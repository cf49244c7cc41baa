"""Asteroid landing: spherical-harmonic gravity, rotating-frame dynamics, phase constraints.

Units are km, s and km/s^2 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .design import L1Config, UncertaintyBounds
from .linalg import Box, LtiPlant
from .mpc import MpcCost
from .norms import FilterBank

DEGREE = 4


class GravityError(ValueError):
    pass


@dataclass(frozen=True)
class GravityField:
    mu: float
    R0: float
    C: np.ndarray  # C[l, m], l, m <= DEGREE
    S: np.ndarray
    n_spin: float = 0.0

    def __post_init__(self):
        C = np.zeros((DEGREE + 1, DEGREE + 1))
        S = np.zeros((DEGREE + 1, DEGREE + 1))
        c = np.asarray(self.C, float)
        s = np.asarray(self.S, float)
        C[: c.shape[0], : c.shape[1]] = c
        S[: s.shape[0], : s.shape[1]] = s
        if abs(C[0, 0] - 1.0) > 1e-12:
            raise GravityError("C[0, 0] must be 1")
        if np.any(S[:, 0] != 0):
            raise GravityError("S[l, 0] must be 0")
        if self.mu <= 0 or self.R0 <= 0:
            raise GravityError("mu and R0 must be positive")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "S", S)

    @classmethod
    def point_mass(cls, mu: float, R0: float = 1.0, n_spin: float = 0.0) -> "GravityField":
        return cls(mu, R0, [[1.0]], [[0.0]], n_spin)

    @classmethod
    def ellipsoid(cls, a, b, c, mu, R0=None, n_spin=0.0) -> "GravityField":
        R0 = (a + b + c) / 3.0 if R0 is None else R0
        return cls(mu, R0, ellipsoid_stokes(a, b, c, R0), np.zeros((1, 1)), n_spin)


def ellipsoid_stokes(a: float, b: float, c: float, R0: float) -> np.ndarray:
    """Constant-density tri-axial ellipsoid coefficients C[l, m] to fourth order (all S = 0)."""
    if not (c <= b <= a) or R0 <= 0 or c <= 0:
        raise GravityError("need 0 < c <= b <= a and R0 > 0")
    C = np.zeros((DEGREE + 1, DEGREE + 1))
    C[0, 0] = 1.0
    C20 = (2.0 * c * c - a * a - b * b) / (10.0 * R0 * R0)
    C22 = (a * a - b * b) / (20.0 * R0 * R0)
    C[2, 0] = C20
    C[2, 2] = C22
    C[4, 0] = 15.0 / 7.0 * (C20 ** 2 + 2 * C22 ** 2)
    C[4, 2] = 5.0 / 7.0 * C20 * C22
    C[4, 4] = 5.0 / 28.0 * C22 ** 2
    return C


def _vw(pos, R0: float, nmax: int):
    """V[l, m], W[l, m] for l <= nmax by the vertical and diagonal recursions."""
    x, y, z = pos
    r2 = x * x + y * y + z * z
    if r2 == 0.0:
        raise GravityError("gravity is singular at the origin")
    rho = R0 * R0 / r2
    x0, y0, z0 = R0 * x / r2, R0 * y / r2, R0 * z / r2
    V = np.zeros((nmax + 2, nmax + 2))
    W = np.zeros((nmax + 2, nmax + 2))
    V[0, 0] = R0 / np.sqrt(r2)
    for m in range(nmax + 1):
        if m > 0:
            V[m, m] = (2 * m - 1) * (x0 * V[m - 1, m - 1] - y0 * W[m - 1, m - 1])
            W[m, m] = (2 * m - 1) * (x0 * W[m - 1, m - 1] + y0 * V[m - 1, m - 1])
        if m + 1 <= nmax:
            V[m + 1, m] = (2 * m + 1) * z0 * V[m, m]
            W[m + 1, m] = (2 * m + 1) * z0 * W[m, m]
        for n in range(m + 2, nmax + 1):
            V[n, m] = ((2 * n - 1) * z0 * V[n - 1, m] - (n + m - 1) * rho * V[n - 2, m]) / (n - m)
            W[n, m] = ((2 * n - 1) * z0 * W[n - 1, m] - (n + m - 1) * rho * W[n - 2, m]) / (n - m)
    return V, W


def gravity_potential(field: GravityField, pos) -> float:
    """G = -(mu / R0) sum C V + S W; the force per unit mass is -grad G."""
    V, W = _vw(np.asarray(pos, float), field.R0, DEGREE)
    s = np.sum(field.C * V[: DEGREE + 1, : DEGREE + 1] + field.S * W[: DEGREE + 1, : DEGREE + 1])
    return -field.mu / field.R0 * float(s)


def gravity_accel(field: GravityField, pos) -> np.ndarray:
    """-grad G from the degree-(l+1) terms of the same recursion."""
    V, W = _vw(np.asarray(pos, float), field.R0, DEGREE + 1)
    C, S = field.C, field.S
    ax = ay = az = 0.0
    for n in range(DEGREE + 1):
        for m in range(n + 1):
            c, s = C[n, m], S[n, m]
            if c == 0.0 and s == 0.0:
                continue
            if m == 0:
                ax -= c * V[n + 1, 1]
                ay -= c * W[n + 1, 1]
            else:
                k = factorial(n - m + 2) / factorial(n - m)
                ax += 0.5 * ((-c * V[n + 1, m + 1] - s * W[n + 1, m + 1])
                             + k * (c * V[n + 1, m - 1] + s * W[n + 1, m - 1]))
                ay += 0.5 * ((-c * W[n + 1, m + 1] + s * V[n + 1, m + 1])
                             + k * (-c * W[n + 1, m - 1] + s * V[n + 1, m - 1]))
            az += (n - m + 1) * (-c * V[n + 1, m] - s * W[n + 1, m])
    return field.mu / field.R0 ** 2 * np.array([ax, ay, az])


def asteroid_true_dynamics(field: GravityField, state, u) -> np.ndarray:
    """Rotating-frame equations of motion; state = [x, y, z, vx, vy, vz]."""
    state = np.asarray(state, float)
    p, v = state[:3], state[3:]
    n = field.n_spin
    g = gravity_accel(field, p)
    acc = g + np.array([2 * n * v[1] + n * n * p[0], -2 * n * v[0] + n * n * p[1], 0.0]) + u
    return np.concatenate([v, acc])


def linearize_at(field: GravityField, X0, h: float = 1e-4):
    """(A, B, U0) about the hover point X0 (zero velocity) by central differences."""
    X0 = np.asarray(X0, float)
    if np.any(X0[3:] != 0):
        raise ValueError("linearisation point must have zero velocity")
    U0 = -asteroid_true_dynamics(field, X0, np.zeros(3))[3:]
    A = np.zeros((6, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        A[:, j] = (asteroid_true_dynamics(field, X0 + e, U0)
                   - asteroid_true_dynamics(field, X0 - e, U0)) / (2 * h)
    B = np.vstack([np.zeros((3, 3)), np.eye(3)])
    return A, B, U0


# ---------------------------------------------------------------- phase constraints

def closest_point_on_ellipsoid(p, axes, max_iter: int = 50, tol: float = 1e-13):
    """Closest point q on sum (x_i/a_i)^2 = 1 to p, via Newton on the multiplier t.

    q_i = a_i^2 p_i / (a_i^2 + t), with t the root of sum (a_i p_i / (a_i^2 + t))^2 = 1
    on (-min a_i^2, inf).
    """
    p = np.asarray(p, float)
    a2 = np.asarray(axes, float) ** 2
    ap2 = a2 * p * p
    if np.sum(p * p / a2) == 1.0:
        return p.copy()
    lo = -np.min(a2) + 1e-15
    t = 0.0
    for _ in range(max_iter):
        d = a2 + t
        g = np.sum(ap2 / d ** 2) - 1.0
        dg = -2.0 * np.sum(ap2 / d ** 3)
        step = g / dg
        t_new = t - step
        if t_new <= lo:
            t_new = 0.5 * (t + lo)
        if abs(t_new - t) <= tol * max(1.0, abs(t)):
            t = t_new
            return a2 * p / (a2 + t)
        t = t_new
    raise GravityError("closest-point Newton iteration did not converge")


def ellipsoid_halfspace(p, axes):
    """(n, q): outward unit normal at the closest point q; safe side is n.(p - q) >= 0."""
    q = closest_point_on_ellipsoid(p, axes)
    n = q / np.asarray(axes, float) ** 2
    return n / np.linalg.norm(n), q


def pyramid_rows(apex, axis, half_angle_deg: float):
    """Four faces |e_i.(p - apex)| <= tan(angle) axis.(p - apex) as rows G p <= h."""
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    k = np.tan(np.deg2rad(half_angle_deg))
    G = np.array([e1 - k * axis, -e1 - k * axis, e2 - k * axis, -e2 - k * axis])
    return G, G @ np.asarray(apex, float)


def phase_constraints(phase: str, state, targets: dict):
    """Linear rows G p <= h on the absolute position for one MPC solve."""
    p = np.asarray(state, float)[:3]
    if phase == "I":
        n, q = ellipsoid_halfspace(p, targets["safety_axes"])
        return -n[None, :], np.array([-n @ q])
    if phase == "II":
        return pyramid_rows(targets["apex"], targets["axis"], targets["half_angle"])
    raise ValueError("phase must be 'I' or 'II'")


# ---------------------------------------------------------------- scenario

ASTEROID_DEFAULTS = {
    "n_spin": 3.3118e-4, "mu_true": 4.46e-4, "axes_true": [17.0, 5.5, 5.5],
    "mu_design": 4.1e-4, "axes_design": [20.0, 5.0, 5.0],
    "safety_axes": [20.0, 12.0, 7.5],
    "x_init": [20.0, -15.0, 0.0, 0.0, 0.0, 0.0],
    "target_1": [5.0, 12.0, 1.0, 0.0, 0.0, 0.0],
    "target": [5.86, 5.21, 1.54, 0.0, 0.0, 0.0],
    "pyramid_half_angle": 30.0, "apex_depth": 0.02,
    "v_max": 0.01, "pos_box_1": 40.0, "pos_box_2": 10.0,
    "u_max_1": 1e-4, "u_max_2": 2e-3,
    "Q": [1, 1, 1, 100, 100, 100], "R_1": 5e8, "R_2": 5e4,
    "mpc_dt_1": 10.0, "mpc_horizon_1": 400.0, "mpc_dt_2": 1.0, "mpc_horizon_2": 40.0,
    "dt_sim_1": 1.0, "dt_sim_2": 0.1, "duration_1": 4000.0, "duration_2": 1200.0,
    "kx_omega_1": 0.01, "kx_omega_2": 0.05, "kx_zeta": 0.8,
    "kf_1": 0.5, "kf_2": 5.0, "Ae_1": -0.005, "Ae_2": -0.05, "gamma1": 1e-3,
    "T_runtime_1": 1.0, "T_runtime_2": 0.1,
    "rho_max": 1e4, "bound_samples": 4000, "bound_margin": 1.2, "bound_seed": 0,
}


def _pd_gain(omega: float, zeta: float) -> np.ndarray:
    return np.hstack([-omega ** 2 * np.eye(3), -2 * zeta * omega * np.eye(3)])


def empirical_bounds(sigma, pos_box: float, v_max: float, admissible, samples: int,
                     margin: float, seed: int):
    """Sampled sup |sigma_j| and sup ||grad sigma_j||_1 over the mission domain, inflated by margin.

    sigma maps a deviation state to the lumped velocity-row mismatch.  Only
    deviation states accepted by admissible (the region the phase constraints
    keep the spacecraft in) are sampled.
    """
    rng = np.random.default_rng(seed)
    pts = []
    tries = 0
    while len(pts) < samples:
        tries += 1
        if tries > 1000 * samples:
            raise ValueError("admissible region too small to sample")
        d = np.concatenate([rng.uniform(-pos_box, pos_box, 3), rng.uniform(-v_max, v_max, 3)])
        if admissible(d):
            pts.append(d)
    pts = np.array(pts)
    vals = np.array([sigma(d) for d in pts])
    bf = margin * np.max(np.abs(vals), axis=0)
    h = 1e-4
    L = np.zeros(vals.shape[1])
    for d in pts[: max(1, samples // 10)]:
        J = np.zeros((vals.shape[1], 6))
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            J[:, j] = (sigma(d + e) - sigma(d - e)) / (2 * h)
        L = np.maximum(L, np.sum(np.abs(J), axis=1))
    return bf, margin * L


def asteroid_scenario(phase: str = "I", overrides: dict | None = None):
    from .scenarios import MpcSettings, Scenario, _merge

    p = _merge(ASTEROID_DEFAULTS, overrides)
    k = "1" if phase == "I" else "2"
    truth = GravityField.ellipsoid(*p["axes_true"], mu=p["mu_true"], n_spin=p["n_spin"])
    design = GravityField.ellipsoid(*p["axes_design"], mu=p["mu_design"], n_spin=p["n_spin"])
    X_eq = np.asarray(p["target_1"] if phase == "I" else p["target"], float)
    start = np.asarray(p["x_init"] if phase == "I" else p["target_1"], float)
    A, B, U0 = linearize_at(design, X_eq)
    plant = LtiPlant(A, B, np.vstack([np.eye(3), np.zeros((3, 3))]), np.eye(6))

    def true_dynamics(t, dx, du):
        return asteroid_true_dynamics(truth, X_eq + dx, U0 + du)

    def sigma(dx):
        return (true_dynamics(0.0, dx, np.zeros(3)) - A @ dx)[3:]

    umax = p["u_max_" + k]
    U = Box(-umax - U0, umax - U0)
    vb = p["v_max"]
    X = Box.symmetric([p["pos_box_" + k]] * 3 + [vb] * 3)
    l1 = L1Config(FilterBank.uniform(p["kf_" + k], 3), p["Ae_" + k] * np.eye(6), gamma1=p["gamma1"],
                  T=p["T_runtime_" + k], T_theory=p["T_runtime_" + k], scale_w=False,
                  rho_max=p["rho_max"])
    cost = MpcCost(Qy=np.diag(p["Q"]), R=p["R_" + k] * np.eye(3), Cy=np.eye(6))
    Kx = _pd_gain(p["kx_omega_" + k], p["kx_zeta"])

    if phase == "I":
        targets = {"safety_axes": p["safety_axes"]}
        axes = np.asarray(p["safety_axes"], float)

        def safety_margin(dx):
            return float(np.sum(((X_eq[:3] + dx[:3]) / axes) ** 2) - 1.0)
    else:
        axis = design_normal(p["axes_design"], X_eq[:3])
        # apex below the landing point, so the tightened cone still contains the target
        apex = X_eq[:3] - p["apex_depth"] * axis
        targets = {"apex": apex, "axis": axis, "half_angle": p["pyramid_half_angle"]}
        Gp, hp = pyramid_rows(apex, axis, p["pyramid_half_angle"])

        def safety_margin(dx):
            return float(np.min(hp - Gp @ (X_eq[:3] + dx[:3])))

    bf, L = empirical_bounds(sigma, p["pos_box_" + k], p["v_max"], lambda d: safety_margin(d) >= 0,
                             p["bound_samples"], p["bound_margin"], p["bound_seed"])
    bounds = UncertaintyBounds(bf_channels=lambda Z: bf, Lf_channels=lambda Z: L,
                               bw_channels=np.zeros(3))

    def constraint_rows(dx):
        G, h = phase_constraints(phase, X_eq + dx, targets)
        # rows on absolute position -> rows on the deviation state
        G6 = np.hstack([G, np.zeros((G.shape[0], 3))])
        return G6, h - G @ X_eq[:3]

    return Scenario(
        name="asteroid" if phase == "I" else "asteroid-phase2", plant=plant,
        true_dynamics=true_dynamics, bounds=bounds, X=X, U=U, X0=Box(start - X_eq - 1e-9, start - X_eq + 1e-9),
        x0=start - X_eq, reference=None,
        mpc=MpcSettings(p["mpc_horizon_" + k], p["mpc_dt_" + k], cost), l1=l1, ppg=None, Kx=Kx,
        duration=p["duration_" + k], dt_sim=p["dt_sim_" + k], params=p,
        constraint_rows=constraint_rows, target=np.zeros(3), safety_margin=safety_margin,
        info={"origin": X_eq, "U0": U0, "truth": truth, "design": design},
    )


def design_normal(axes, p) -> np.ndarray:
    """Outward normal of the design ellipsoid's level surface through p."""
    g = 2 * np.asarray(p, float) / np.asarray(axes, float) ** 2
    return g / np.linalg.norm(g)


def final_distance(log, scenario) -> float:
    return float(np.linalg.norm(log.x[-1, :3]))
