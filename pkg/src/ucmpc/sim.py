"""Closed-loop simulation of the composite law against the true plant.

The plant, the nominal system, the state predictor and (optionally) the
reference-system oracle are integrated jointly with RK4 at dt_sim.  The
nominal input and the adaptive input are held over each step; the ancillary
feedback Kx (x - x_n) is evaluated continuously inside the RK4 stages.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptive import L1Element, PredictorState
from .design import TighteningReport
from .linalg import Box
from .mpc import solve_mpc, solve_mpc_soft

CONTROLLERS = ("ucmpc", "vanilla", "ablation-noua")
BOUND_TOL = 1e-9


@dataclass
class SimLog:
    scenario: str
    controller: str
    t: np.ndarray
    x: np.ndarray
    x_n: np.ndarray
    x_hat: np.ndarray
    sigma_hat: np.ndarray
    u: np.ndarray
    u_bar: np.ndarray
    u_a: np.ndarray
    u_n: np.ndarray
    x_r: np.ndarray | None = None
    u_r: np.ndarray | None = None
    mpc_t: np.ndarray = None
    mpc_objective: np.ndarray = None
    mpc_solve_time: np.ndarray = None
    mpc_slack: np.ndarray = None
    status: str = "ok"
    failure_time: float | None = None
    message: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def __len__(self) -> int:
        return len(self.t)


def _rk4(f, t, z, h):
    k1 = f(t, z)
    k2 = f(t + 0.5 * h, z + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, z + 0.5 * h * k2)
    k4 = f(t + h, z + h * k3)
    return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _ratio(a: float, b: float, what: str) -> int:
    r = a / b
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-6 * max(1, k):
        raise ValueError(f"{what} must be a positive integer multiple of dt_sim")
    return k


def _tightened_rows(scenario, xref, tilde_rho):
    if scenario.constraint_rows is None:
        return None
    G, h = scenario.constraint_rows(xref)
    G = np.atleast_2d(G)
    h = np.asarray(h, float).reshape(-1)
    if tilde_rho is not None:
        h = h - np.abs(G) @ np.asarray(tilde_rho)
    return G, h


def simulate(scenario, report: TighteningReport | None, controller: str = "ucmpc",
             duration: float | None = None, dt_sim: float | None = None, oracle: bool = False,
             seed: int | None = None, x0=None) -> SimLog:
    """Runs one controller on the true plant.  See run_ucmpc / run_vanilla_mpc."""
    if controller not in CONTROLLERS:
        raise ValueError(f"controller must be one of {CONTROLLERS}")
    vanilla = controller == "vanilla"
    if not vanilla and report is None:
        raise ValueError("a design report is required for UC-MPC runs")
    plant = scenario.plant
    n, m = plant.n, plant.m
    A, B = plant.A, plant.B
    duration = scenario.duration if duration is None else float(duration)
    dt = dt_sim or scenario.dt_sim
    if not dt:
        # no fixed step: the certified sample time, or the MPC step for a report-free baseline
        dt = report.T_final if report is not None else min(scenario.mpc.dt, scenario.l1.T)
    if not dt:
        raise ValueError("dt_sim is not set")
    if x0 is None:
        x0 = scenario.x0
        if seed is not None:
            rng = np.random.default_rng(seed)
            x0 = rng.uniform(scenario.X0.lo, scenario.X0.hi)
    x0 = np.asarray(x0, dtype=float)

    if vanilla:
        Kx = np.zeros((m, n))
        prob = scenario.mpc_problem(scenario.X, scenario.U)
        tilde_rho = None
    else:
        Kx = np.atleast_2d(report.Kx)
        prob = scenario.mpc_problem(report.Xn, report.Un)
        tilde_rho = report.tilde_rho
    use_l1 = controller == "ucmpc"
    n_mpc = _ratio(scenario.mpc.dt, dt, "MPC step")
    steps = int(round(duration / dt))
    if use_l1 or oracle:
        T_run = report.T_runtime if scenario.dt_sim else report.T_final
        n_est = _ratio(T_run, dt, "estimation period")
        el = L1Element(plant, Kx, scenario.l1.Ae, report.filters_final, T_run, x0)
    Am = A + B @ Kx
    Ae = scenario.l1.Ae
    # [B Bu] is square and invertible; its inverse splits the lumped uncertainty
    split = np.linalg.inv(np.hstack([B, plant.Bu]))
    kf = report.filters_final.kf if report is not None else None
    lumped = scenario.lumped

    # joint state: x, x_n, x_hat, (x_r, u_r)
    sx, sn, sh = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    sr, su = slice(3 * n, 4 * n), slice(4 * n, 4 * n + m)
    z = np.concatenate([x0, x0, x0] + ([x0, np.zeros(m)] if oracle else []))

    def rhs(t, z, u_bar, u_a, sig):
        x, xn = z[sx], z[sn]
        fb = Kx @ (x - xn)
        u = u_bar + fb + u_a
        dz = np.empty_like(z)
        dz[sx] = scenario.true_dynamics(t, x, u)
        dz[sn] = A @ xn + B @ u_bar
        u_opt = u_bar - Kx @ xn
        dz[sh] = Am @ x + B @ (u_opt + u_a) + sig + Ae @ (z[sh] - x)
        if oracle:
            xr, ur = z[sr], z[su]
            lr = lumped(t, xr)
            dz[sr] = Am @ xr + B @ (u_opt + ur) + lr
            dz[su] = -kf * (ur + (split @ lr)[:m])
        return dz

    K = steps + 1
    log = {k: np.full((K, d), np.nan) for k, d in
           (("x", n), ("x_n", n), ("x_hat", n), ("sigma_hat", n), ("u", m), ("u_bar", m),
            ("u_a", m), ("u_n", m))}
    if oracle:
        log["x_r"] = np.full((K, n), np.nan)
        log["u_r"] = np.full((K, m), np.nan)
    n_solves = (steps + n_mpc - 1) // n_mpc + 1
    mpc_t, mpc_obj, mpc_time, mpc_slack = [], [], [], []
    tgrid = np.arange(K) * dt
    status, fail_t, msg = "ok", None, ""
    u_bar = np.zeros(m)
    u_prev = None
    sig = np.zeros(n)
    last = K
    for k in range(K):
        t = tgrid[k]
        x, xn = z[sx], z[sn]
        if k % n_mpc == 0 and k < steps:
            if vanilla:
                sol = solve_mpc_soft(prob, x, t, scenario.mpc.soft_penalty, u_prev=u_prev,
                                     extra=_tightened_rows(scenario, x, None))
            else:
                sol = solve_mpc(prob, xn, t, u_prev=u_prev, extra=_tightened_rows(scenario, xn, tilde_rho))
            mpc_t.append(t)
            mpc_obj.append(sol.objective)
            mpc_time.append(sol.solve_time)
            mpc_slack.append(sol.slack)
            if sol.status != "solved":
                status, fail_t, msg = "mpc_infeasible", t, f"MPC {sol.status} at t={t:.4f}"
                last = k
                break
            u_bar = sol.u_seq[0]
            u_prev = u_bar
        if use_l1:
            if k % n_est == 0:
                el.ps = PredictorState(z[sh].copy(), el.ps.sigma_hat, z[sh] - x, el.ps.t_last_update)
                el.estimate(x, t)
            sig = el.ps.sigma_hat
            u_a = el.fs.u_a.copy()
        else:
            u_a = np.zeros(m)
        u = u_bar + Kx @ (x - xn) + u_a
        log["x"][k] = x
        log["x_n"][k] = xn if not vanilla else np.nan
        log["x_hat"][k] = z[sh]
        log["sigma_hat"][k] = sig
        log["u"][k] = u
        log["u_bar"][k] = u_bar
        log["u_a"][k] = u_a
        log["u_n"][k] = u_bar if not vanilla else np.nan
        if oracle:
            log["x_r"][k] = z[sr]
            log["u_r"][k] = z[su]
        if k == steps:
            break
        z = _rk4(lambda tt, zz: rhs(tt, zz, u_bar, u_a, sig), t, z, dt)
        if not np.all(np.isfinite(z)):
            status, fail_t, msg = "numeric_fault", t, f"non-finite state at t={t:.4f}"
            last = k + 1
            break
        if use_l1:
            el.filter(dt)
    if last < K:
        for key in log:
            log[key] = log[key][:last]
        tgrid = tgrid[:last]
    if not vanilla:
        # the predictor is only meaningful when the adaptive element runs
        if not use_l1:
            log["x_hat"][:] = np.nan
    else:
        log["x_hat"][:] = np.nan
    return SimLog(scenario=scenario.name, controller=controller, t=tgrid,
                  mpc_t=np.asarray(mpc_t), mpc_objective=np.asarray(mpc_obj),
                  mpc_solve_time=np.asarray(mpc_time), mpc_slack=np.asarray(mpc_slack),
                  status=status, failure_time=fail_t, message=msg,
                  meta={"dt_sim": dt, "duration": duration, "scenario_hash": scenario.hash,
                        "x0": x0.tolist(), "seed": seed, "n_solves_planned": n_solves},
                  **log)


def run_ucmpc(scenario, report, duration=None, dt_sim=None, **kw) -> SimLog:
    return simulate(scenario, report, "ucmpc", duration, dt_sim, **kw)


def run_vanilla_mpc(scenario, duration=None, dt_sim=None, **kw) -> SimLog:
    return simulate(scenario, None, "vanilla", duration, dt_sim, **kw)


def run_ablation_noua(scenario, report, duration=None, dt_sim=None, **kw) -> SimLog:
    return simulate(scenario, report, "ablation-noua", duration, dt_sim, **kw)


def run_reference_oracle(scenario, report, duration=None, dt_sim=None, **kw) -> SimLog:
    """UC-MPC run with the non-implementable reference system co-integrated (test fixture)."""
    return simulate(scenario, report, "ucmpc", duration, dt_sim, oracle=True, **kw)


# ---------------------------------------------------------------- verification

def _claim(margin: np.ndarray, t: np.ndarray, tol: float = BOUND_TOL) -> dict:
    """margin >= 0 means satisfied; reports the worst sample."""
    if margin.size == 0 or np.all(np.isnan(margin)):
        return {"pass": True, "worst_margin": None, "t_worst": None, "checked": False}
    mm = np.where(np.isnan(margin), np.inf, margin)
    per_t = mm.min(axis=1) if mm.ndim == 2 else mm
    i = int(np.argmin(per_t))
    return {"pass": bool(per_t[i] >= -tol), "worst_margin": float(per_t[i]), "t_worst": float(t[i]),
            "checked": True}


def box_margin(v: np.ndarray, box: Box) -> np.ndarray:
    return np.minimum(v - box.lo, box.hi - v)


def bound_flags(log: SimLog, scenario, report: TighteningReport | None) -> dict:
    """Per-sample flags, recomputed from the logged values."""
    f = {"in_X": box_margin(log.x, scenario.X).min(axis=1) >= -BOUND_TOL,
         "in_U": box_margin(log.u, scenario.U).min(axis=1) >= -BOUND_TOL}
    if report is not None and log.controller != "vanilla":
        f["tube"] = np.all(np.abs(log.x - log.x_n) <= report.tilde_rho + BOUND_TOL, axis=1)
        f["ua"] = np.all(np.abs(log.u_a) <= report.rho_ua + BOUND_TOL, axis=1)
    return f


def verify_bounds(log: SimLog, report: TighteningReport | None, scenario) -> dict:
    """Pass/fail per containment claim with worst margins and timestamps."""
    out = {"x_in_X": _claim(box_margin(log.x, scenario.X), log.t),
           "u_in_U": _claim(box_margin(log.u, scenario.U), log.t)}
    if report is not None and log.controller != "vanilla":
        out["tube"] = _claim(report.tilde_rho - np.abs(log.x - log.x_n), log.t)
        out["u_a"] = _claim(report.rho_ua - np.abs(log.u_a), log.t)
        # the MPC enforces the tightened sets at its own sample instants
        dt_mpc = scenario.mpc.dt
        at = np.abs(log.t / dt_mpc - np.round(log.t / dt_mpc)) < 1e-6
        out["x_n_in_Xn"] = _claim(box_margin(log.x_n[at], report.Xn), log.t[at], 1e-6)
        out["u_n_in_Un"] = _claim(box_margin(log.u_bar, report.Un), log.t, 1e-6)
    if getattr(scenario, "safety_margin", None) is not None:
        out["safety"] = _claim(np.apply_along_axis(scenario.safety_margin, 1, log.x), log.t)
    out["completed"] = {"pass": log.ok, "status": log.status, "t_fail": log.failure_time}
    out["all_pass"] = all(v["pass"] for v in out.values())
    return out


def oracle_checks(log: SimLog, report: TighteningReport) -> dict:
    """Reference-system containments: |x_r - x| <= gamma1, |x_r - x_n| <= reference tube bound,
    |x_hat - x| <= gamma0."""
    d_rx = np.max(np.abs(log.x_r - log.x))
    d_rn = np.max(np.abs(log.x_r - log.x_n))
    d_pred = np.max(np.abs(log.x_hat - log.x))
    return {"xr_x": (float(d_rx), report.gamma1), "xr_xn": (float(d_rn), report.reference_tube_bound),
            "x_tilde": (float(d_pred), report.gamma0)}


# ---------------------------------------------------------------- metrics and output

def output_error(log: SimLog, scenario) -> np.ndarray:
    C = scenario.plant.C
    r = np.array([scenario.reference(t) for t in log.t])
    return log.x @ C.T - r


def steady_state_error(log: SimLog, scenario, channel: int = 0) -> float:
    """Mean |y_i - r_i| over the scenario's steady windows."""
    e = np.abs(output_error(log, scenario)[:, channel])
    mask = np.zeros(len(log.t), bool)
    for a, b in scenario.steady_windows:
        mask |= (log.t >= a) & (log.t < b)
    if not mask.any():
        raise ValueError("log does not cover the steady windows")
    return float(np.mean(e[mask]))


def max_tube(log: SimLog) -> np.ndarray:
    return np.nanmax(np.abs(log.x - log.x_n), axis=0)


def max_violation(log: SimLog, scenario) -> float:
    v = np.concatenate([-box_margin(log.x, scenario.X), -box_margin(log.u, scenario.U)], axis=1)
    return float(max(np.max(v), 0.0))


def _columns(log: SimLog) -> list[str]:
    n, m = log.x.shape[1], log.u.shape[1]
    cols = ["t"]
    cols += [f"x{i + 1}" for i in range(n)] + [f"xn{i + 1}" for i in range(n)]
    cols += [f"xhat{i + 1}" for i in range(n)] + [f"sighat{i + 1}" for i in range(n)]
    cols += [f"ua{j + 1}" for j in range(m)] + [f"u{j + 1}" for j in range(m)]
    cols += [f"ubar{j + 1}" for j in range(m)]
    if log.x_r is not None:
        cols += [f"xr{i + 1}" for i in range(n)]
    return cols


def write_csv(log: SimLog, path, scenario, report=None, dt_log: float = 1e-2) -> Path:
    """Time series every dt_log, plus a JSON column manifest next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dt = log.meta["dt_sim"]
    stride = max(1, int(round(dt_log / dt)))
    idx = np.arange(0, len(log.t), stride)
    flags = bound_flags(log, scenario, report)
    cols = _columns(log) + ["flag_" + k for k in flags]
    blocks = [log.t[:, None], log.x, log.x_n, log.x_hat, log.sigma_hat, log.u_a, log.u, log.u_bar]
    if log.x_r is not None:
        blocks.append(log.x_r)
    data = np.hstack(blocks + [np.column_stack([flags[k] for k in flags]).astype(float)])[idx]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in data:
            w.writerow([f"{v:.10g}" for v in row])
    manifest = {"columns": cols, "dt_log": dt * stride, "scenario": log.scenario,
                "controller": log.controller, "status": log.status, "meta": log.meta}
    path.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2))
    return path


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0
