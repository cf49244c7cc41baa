"""Case-study scenarios: plant data, true dynamics, uncertainty evaluators, settings.

Every scenario is built from a flat dict of constants.  Overrides are merged
into that dict before construction, and the dict is what the content hash
covers, so a design report can be bound to the exact constants it used.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .design import L1Config, UncertaintyBounds
from .linalg import Box, LtiPlant, decompose_uncertainty
from .mpc import MpcCost, MpcProblem
from .norms import FilterBank
from .ppg import PpgProblem


@dataclass(frozen=True)
class MpcSettings:
    horizon: float
    dt: float
    cost: MpcCost
    soft_penalty: float = 1e4


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: LtiPlant
    true_dynamics: Callable  # (t, x, u) -> x'
    bounds: UncertaintyBounds
    X: Box
    U: Box
    X0: Box
    x0: np.ndarray
    reference: Callable | None
    mpc: MpcSettings
    l1: L1Config
    ppg: PpgProblem | None
    Kx: np.ndarray | None
    duration: float
    dt_sim: float
    params: dict = field(default_factory=dict, compare=False)
    # x -> (G, h): extra rows G x <= h applied at every MPC stage, re-linearised per solve
    constraint_rows: Callable | None = None
    # time windows (t0, t1) used for steady-state error metrics
    steady_windows: tuple = ()
    target: np.ndarray | None = None  # position target in plant coordinates (asteroid)
    # x -> margin, >= 0 when a non-box safety constraint holds on the true state
    safety_margin: Callable | None = None
    info: dict = field(default_factory=dict, compare=False)

    def lumped(self, t, x) -> np.ndarray:
        """True minus nominal dynamics; independent of u for every shipped scenario."""
        x = np.asarray(x, dtype=float)
        return self.true_dynamics(t, x, np.zeros(self.plant.m)) - self.plant.A @ x

    def matched_unmatched(self, t, x):
        return decompose_uncertainty(self.lumped(t, x), self.plant)

    def mpc_problem(self, Xn: Box, Un: Box) -> MpcProblem:
        return MpcProblem(self.plant, self.mpc.horizon, self.mpc.dt, self.mpc.cost, Xn, Un,
                          reference=self.reference)

    @property
    def hash(self) -> str:
        return scenario_hash(self.name, self.params)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def scenario_hash(name: str, params: dict) -> str:
    blob = json.dumps({"name": name, "params": params}, sort_keys=True, separators=(",", ":"),
                      default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(defaults: dict, overrides: dict | None) -> dict:
    p = copy.deepcopy(defaults)
    for k, v in (overrides or {}).items():
        if k not in p:
            raise KeyError(f"unknown scenario constant {k!r}")
        p[k] = v
    return p


def _step_reference(levels, t_switch):
    levels = np.asarray(levels, dtype=float)
    zero = np.zeros_like(levels)
    return lambda t: levels if t < t_switch else zero


def _alpha_extent(Z: Box, idx: int = 2) -> float:
    return float(max(abs(Z.lo[idx]), abs(Z.hi[idx])))


# ---------------------------------------------------------------- F-16

F16_A = [[0.0, 0.0067, 1.34], [0.0, -0.869, 43.2], [0.0, 0.993, -1.34]]
F16_KX = [[4.1075, 1.6612, 16.2228], [-3.0950, 0.0595, -1.6320]]

F16_DEFAULTS = {
    "A": F16_A,
    "B": [[0.169, 0.252], [-17.3, -1.58], [-0.169, -0.252]],
    "Bu": [0.1061, 0.0, 0.1061],
    "C": [[1.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
    "f_sin_amp": 1.44, "f_sin_freq": 0.4 * np.pi, "f_alpha2": 0.18,
    "f2_bias": 0.18, "f2_alpha": 0.36,
    "w_amp": 3.0, "w_freq": 0.6 * np.pi,
    "X_hw": [10.0, 100.0, 4.0], "U_hw": [25.0, 22.0], "X0_rho": 0.1,
    "x0": [0.0, 0.0, 0.0],
    "reference": [9.0, 6.5], "t_switch": 7.5, "duration": 15.0,
    "Kx": F16_KX,
    "Cz": [[0, 0, 1], [0, 0, 0], [0, 0, 0]], "Dz": [[0, 0], [0.1, 0], [0, 0.1]],
    "kf": 200.0, "Ae": -10.0, "gamma1": 0.01, "T_theory": 1e-7, "T_runtime": 1e-4,
    "Tx_offdiag": 0.01, "scale_w": True,
    "mpc_horizon": 0.2, "mpc_dt": 0.01, "Qy": 1e4, "R": 1.0, "Rd": 0.0, "steady_input": True,
    "soft_penalty": 1e4,
    "dt_sim": 1e-4,
}


def f16_scenario(overrides: dict | None = None) -> Scenario:
    p = _merge(F16_DEFAULTS, overrides)
    plant = LtiPlant(p["A"], p["B"], p["Bu"], p["C"])
    A, B, Bu = plant.A, plant.B, plant.Bu[:, 0]
    a1, om1, c2 = p["f_sin_amp"], p["f_sin_freq"], p["f_alpha2"]
    b2, l2 = p["f2_bias"], p["f2_alpha"]
    wa, wom = p["w_amp"], p["w_freq"]

    def f(t, x):
        al = x[2]
        return np.array([-a1 * np.sin(om1 * t) - c2 * al * al, b2 - l2 * al])

    def true_dynamics(t, x, u):
        return A @ x + B @ (u + f(t, x)) + Bu * (wa * np.sin(wom * t))

    bounds = UncertaintyBounds(
        bf_channels=lambda Z: np.array([a1 + c2 * _alpha_extent(Z) ** 2, b2 + l2 * _alpha_extent(Z)]),
        Lf_channels=lambda Z: np.array([2 * c2 * _alpha_extent(Z), l2]),
        bw_channels=[abs(wa)],
    )
    l1 = L1Config(FilterBank.uniform(p["kf"], 2), p["Ae"] * np.eye(3), gamma1=p["gamma1"],
                  T=p["T_runtime"], T_theory=p["T_theory"], Tx_offdiag=p["Tx_offdiag"],
                  scale_w=p["scale_w"])
    cost = MpcCost(Qy=p["Qy"] * np.eye(2), R=p["R"] * np.eye(2),
                   Rd=p["Rd"] * np.eye(2) if p["Rd"] else None, steady_input=p["steady_input"])
    ts = p["t_switch"]
    return Scenario(
        name="f16", plant=plant, true_dynamics=true_dynamics, bounds=bounds,
        X=Box.symmetric(p["X_hw"]), U=Box.symmetric(p["U_hw"]), X0=Box.omega(p["X0_rho"], 3),
        x0=np.asarray(p["x0"], float), reference=_step_reference(p["reference"], ts),
        mpc=MpcSettings(p["mpc_horizon"], p["mpc_dt"], cost, p["soft_penalty"]), l1=l1,
        ppg=PpgProblem(plant, p["Cz"], p["Dz"]),
        Kx=None if p["Kx"] is None else np.asarray(p["Kx"], float),
        duration=p["duration"], dt_sim=p["dt_sim"], params=p,
        steady_windows=((ts - 2.5, ts - 0.5), (p["duration"] - 2.0, p["duration"])),
    )


F16_SISO_DEFAULTS = {
    "A": F16_A,
    "B": [0.169, -17.3, -0.169],
    "Bu": [[1.5e-1, 7e-4], [1.5e-3, -7e-4], [-1.5e-3, 7.5e-2]],
    "orth_tol": 1e-2,
    "C": [[1.0, 0.0, 1.0]],
    "f_sin_amp": 1.44, "f_sin_freq": 0.4 * np.pi, "f_alpha2": 0.18,
    "w_amp": [5.0, 1.0],
    "X_hw": [10.0, 100.0, 4.0], "U_hw": [25.0], "X0_rho": 0.1,
    "x0": [0.0, 0.0, 0.0],
    "reference": [3.0], "t_switch": 7.5, "duration": 15.0,
    "Kx": [[1.6238, 0.7151, 4.8245]],
    "Cz": [[0, 0, 1], [0, 0, 0]], "Dz": [[0], [0.1]],
    "kf": 200.0, "Ae": -10.0, "gamma1": 0.01, "T_theory": 1e-7, "T_runtime": 1e-4,
    "Tx_offdiag": 0.01, "scale_w": True,
    "mpc_horizon": 0.2, "mpc_dt": 0.01, "Qy": 1e4, "R": 1.0, "Rd": 0.0, "steady_input": True,
    "soft_penalty": 1e4,
    "dt_sim": 1e-4,
}


def f16_siso_scenario(overrides: dict | None = None) -> Scenario:
    p = _merge(F16_SISO_DEFAULTS, overrides)
    plant = LtiPlant(p["A"], p["B"], p["Bu"], p["C"], orth_tol=p["orth_tol"])
    A, B, Bu = plant.A, plant.B, plant.Bu
    a1, om1, c2 = p["f_sin_amp"], p["f_sin_freq"], p["f_alpha2"]
    wa = np.asarray(p["w_amp"], float)

    def true_dynamics(t, x, u):
        f = -a1 * np.sin(om1 * t) - c2 * x[2] ** 2
        w = wa * np.array([np.sin(0.6 * np.pi * t), np.cos(0.4 * np.pi * t)])
        return A @ x + B @ (u + f) + Bu @ w

    bounds = UncertaintyBounds(
        bf_channels=lambda Z: np.array([a1 + c2 * _alpha_extent(Z) ** 2]),
        Lf_channels=lambda Z: np.array([2 * c2 * _alpha_extent(Z)]),
        bw_channels=np.abs(wa),
    )
    l1 = L1Config(FilterBank.uniform(p["kf"], 1), p["Ae"] * np.eye(3), gamma1=p["gamma1"],
                  T=p["T_runtime"], T_theory=p["T_theory"], Tx_offdiag=p["Tx_offdiag"],
                  scale_w=p["scale_w"])
    cost = MpcCost(Qy=p["Qy"] * np.eye(1), R=p["R"] * np.eye(1),
                   Rd=p["Rd"] * np.eye(1) if p["Rd"] else None, steady_input=p["steady_input"])
    ts = p["t_switch"]
    return Scenario(
        name="f16-siso", plant=plant, true_dynamics=true_dynamics, bounds=bounds,
        X=Box.symmetric(p["X_hw"]), U=Box.symmetric(p["U_hw"]), X0=Box.omega(p["X0_rho"], 3),
        x0=np.asarray(p["x0"], float), reference=_step_reference(p["reference"], ts),
        mpc=MpcSettings(p["mpc_horizon"], p["mpc_dt"], cost, p["soft_penalty"]), l1=l1,
        ppg=PpgProblem(plant, p["Cz"], p["Dz"]),
        Kx=None if p["Kx"] is None else np.atleast_2d(np.asarray(p["Kx"], float)),
        duration=p["duration"], dt_sim=p["dt_sim"], params=p,
        steady_windows=((ts - 2.5, ts - 0.5), (p["duration"] - 2.0, p["duration"])),
    )


# ---------------------------------------------------------------- reduced-scale scalar plant

SCALAR_DEFAULTS = {
    "a": 1.0, "b": 1.0, "Kx": -3.0,
    "f_amp": 0.3, "f_freq": 2.0, "f_lin": 0.2,
    "X_hw": 2.0, "U_hw": 10.0, "X0_rho": 0.1, "x0": 0.0,
    "reference": 1.0, "t_switch": 1.5, "duration": 3.0,
    "kf": 50.0, "Ae": -10.0, "gamma1": 0.05, "T_theory": 1e-1, "T_runtime": None,
    "mpc_horizon": 0.2, "mpc_dt": 0.01, "Qy": 100.0, "R": 0.01, "steady_input": True,
    "soft_penalty": 1e4,
    "dt_sim": None,
}


def scalar_scenario(overrides: dict | None = None) -> Scenario:
    """One-state test plant, small enough to simulate at the certified sample time."""
    p = _merge(SCALAR_DEFAULTS, overrides)
    plant = LtiPlant([[p["a"]]], [[p["b"]]], np.zeros((1, 0)))
    a, b = p["a"], p["b"]
    fa, fw, fl = p["f_amp"], p["f_freq"], p["f_lin"]

    def true_dynamics(t, x, u):
        return a * x + b * (u + fa * np.sin(fw * t) + fl * x)

    bounds = UncertaintyBounds(
        bf_channels=lambda Z: np.array([fa + fl * Z.max_norm()]),
        Lf_channels=lambda Z: np.array([fl]),
        bw_channels=np.zeros(0),
    )
    # runtime T and dt_sim default to the certified T, filled in by the simulator
    l1 = L1Config(FilterBank.uniform(p["kf"], 1), [[p["Ae"]]], gamma1=p["gamma1"],
                  T=p["T_runtime"] or p["T_theory"], T_theory=p["T_theory"], scale_w=False)
    cost = MpcCost(Qy=[[p["Qy"]]], R=[[p["R"]]], Cy=[[1.0]], steady_input=p["steady_input"])
    ts = p["t_switch"]
    return Scenario(
        name="scalar", plant=plant, true_dynamics=true_dynamics, bounds=bounds,
        X=Box.symmetric([p["X_hw"]]), U=Box.symmetric([p["U_hw"]]), X0=Box.omega(p["X0_rho"], 1),
        x0=np.array([p["x0"]], float), reference=_step_reference([p["reference"]], ts),
        mpc=MpcSettings(p["mpc_horizon"], p["mpc_dt"], cost, p["soft_penalty"]), l1=l1, ppg=None,
        Kx=np.array([[p["Kx"]]]), duration=p["duration"], dt_sim=p["dt_sim"] or 0.0, params=p,
        steady_windows=((ts - 0.7, ts - 0.2), (p["duration"] - 0.5, p["duration"])),
    )


# ---------------------------------------------------------------- registry

def _asteroid(phase):
    def build(overrides=None):
        from .asteroid import asteroid_scenario
        return asteroid_scenario(phase, overrides)
    return build


BUILTINS = {
    "f16": f16_scenario,
    "f16-siso": f16_siso_scenario,
    "scalar": scalar_scenario,
    "asteroid": _asteroid("I"),
    "asteroid-phase2": _asteroid("II"),
}


def load_scenario(name_or_path: str, overrides: dict | None = None) -> Scenario:
    """Built-in name, or a JSON file {"scenario": name, "params": {...}}."""
    if name_or_path in BUILTINS:
        return BUILTINS[name_or_path](overrides)
    path = Path(name_or_path)
    if not path.exists():
        raise KeyError(f"unknown scenario {name_or_path!r}; built-ins are {sorted(BUILTINS)}")
    cfg = json.loads(path.read_text())
    params = dict(cfg.get("params", {}))
    params.update(overrides or {})
    return BUILTINS[cfg["scenario"]](params)
