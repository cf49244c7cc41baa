"""Offline L1 design: stability checks, per-channel error bounds, tightening."""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .linalg import Box, DesignError, LtiPlant, box_pontryagin_diff, is_hurwitz
from .norms import (AlphaConstants, FilterBank, NormTable, alpha_constants, compute_norms,
                    gxm_realization, hxm_realization, hxu_realization, l1_norm,
                    resolvent_s_norm, sample_time_margin, select_T)

log = logging.getLogger(__name__)

RHO_MARGIN = 1e-6
STRICT = 1e-9


@dataclass(frozen=True)
class UncertaintyBounds:
    """Per-channel bound and Lipschitz evaluators of the matched uncertainty over boxes.

    bf_channels(Z) and Lf_channels(Z) return m-vectors; bw_channels holds the
    per-channel bounds of the unmatched signal.
    """

    bf_channels: Callable[[Box], np.ndarray]
    Lf_channels: Callable[[Box], np.ndarray]
    bw_channels: np.ndarray
    lf_time: Callable[[Box], float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bw_channels", np.atleast_1d(np.asarray(self.bw_channels, float)))

    def b_fj(self, Z: Box) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.bf_channels(Z), dtype=float))

    def b_f(self, Z: Box) -> float:
        return float(np.max(self.b_fj(Z)))

    def L_fj(self, Z: Box) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.Lf_channels(Z), dtype=float))

    def L_f(self, Z: Box) -> float:
        return float(np.max(self.L_fj(Z)))

    def l_f(self, Z: Box) -> float:
        return 0.0 if self.lf_time is None else float(self.lf_time(Z))

    @property
    def b_wj(self) -> np.ndarray:
        return self.bw_channels

    @property
    def b_w(self) -> float:
        return float(np.max(self.bw_channels)) if self.bw_channels.size else 0.0


@dataclass(frozen=True)
class L1Config:
    """Adaptive-controller parameters.

    T is the runtime estimation period.  T_theory is where the decade search
    for the certified period starts; the design only ever decreases it.
    """

    filters: FilterBank
    Ae: np.ndarray
    gamma1: float = 0.01
    T: float = 1e-4
    T_theory: float = 1e-1
    Tx_offdiag: float = 0.01
    tol: float = 1e-6
    kf_growth: float = 2.0
    max_escalations: int = 20
    uopt_method: str = "reachable"
    scale_w: bool = True
    rho_max: float | None = None  # upper end of the rho_r search; default 10 max hw(X)

    def __post_init__(self):
        object.__setattr__(self, "Ae", np.atleast_2d(np.asarray(self.Ae, dtype=float)))
        if self.gamma1 <= 0:
            raise ValueError("gamma1 must be positive")
        if not 0 < self.Tx_offdiag <= 1:
            raise ValueError("Tx_offdiag must lie in (0, 1]")
        if self.tol <= 0 or self.kf_growth <= 1:
            raise ValueError("tol must be positive and kf_growth > 1")
        if not is_hurwitz(self.Ae):
            raise ValueError("Ae must be Hurwitz")


@dataclass
class TighteningReport:
    rho_r: float
    rho: float
    check_rho_r: np.ndarray
    tilde_rho: np.ndarray
    rho_ua: np.ndarray
    tilde_rho_u: np.ndarray
    gamma2: float
    Xr: Box
    Xa: Box
    Xn: Box
    Un: Box
    Lambda: np.ndarray
    uopt_bound: float
    filters_final: FilterBank
    T_final: float
    # supporting quantities
    gamma0: float = 0.0
    b_f_Xr: float = 0.0
    b_fj_Xr: np.ndarray = None
    L_f_Xa: float = 0.0
    b_f_Xa: float = 0.0
    b_w: float = 0.0
    norms: NormTable = None
    alpha: AlphaConstants = None
    Kx: np.ndarray = None
    Bu_design: np.ndarray = None
    gamma1: float = 0.0
    T_runtime: float = 0.0
    escalations: int = 0
    bf_history: list = field(default_factory=list)
    channel_norms: dict = field(default_factory=dict)
    caveats: list = field(default_factory=list)

    @property
    def reference_tube_bound(self) -> float:
        """||G|| b_f + ||H_xu|| b_w: uniform reference-to-nominal bound."""
        return self.norms.g_xm * self.b_f_Xr + self.norms.h_xu * self.b_w

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Box):
                v = v.to_dict()
            elif isinstance(v, FilterBank):
                v = v.kf.tolist()
            elif isinstance(v, NormTable):
                v = v.to_dict()
            elif isinstance(v, AlphaConstants):
                v = asdict(v)
            elif isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, list):
                v = [np.asarray(e).tolist() for e in v]
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d) -> "TighteningReport":
        d = dict(d)
        for k in ("Xr", "Xa", "Xn", "Un"):
            d[k] = Box.from_dict(d[k])
        for k in ("check_rho_r", "tilde_rho", "rho_ua", "tilde_rho_u", "b_fj_Xr"):
            d[k] = np.asarray(d[k], dtype=float)
        for k in ("Lambda", "Kx", "Bu_design"):
            d[k] = np.asarray(d[k], dtype=float).reshape(np.shape(d[k]))
        d["filters_final"] = FilterBank(np.asarray(d["filters_final"]))
        d["norms"] = NormTable.from_dict(d["norms"])
        d["alpha"] = AlphaConstants(**d["alpha"])
        return cls(**d)


def scale_w(plant: LtiPlant, b_wj):
    """Bu_bar = Bu Lambda with Lambda = diag(b_wj / max b_w)."""
    b_wj = np.atleast_1d(np.asarray(b_wj, dtype=float))
    if b_wj.size == 0:
        return plant.Bu.copy(), np.zeros((0, 0))
    bw = float(np.max(b_wj))
    lam = np.where(b_wj > 0, b_wj / bw if bw > 0 else 1.0, 1e-12)
    if np.any(b_wj <= 0):
        warnings.warn("zero disturbance bound on some channel; scaling floored at 1e-12")
    Lam = np.diag(lam)
    return plant.Bu @ Lam, Lam


def uopt_bound(U: Box, X: Box, Kx, method: str = "reachable") -> float:
    """Bound on ||u_opt||_inf given u_n = Kx x_n + u_opt, x_n in X, u_n in U.

    "reachable": every u_opt = u_n - Kx x_n with u_n in U and x_n in X.
    "pontryagin": u_opt such that Kx x_n + u_opt stays in U for all x_n in X.
    """
    K = np.atleast_2d(np.asarray(Kx, dtype=float))
    kx_lo = np.sum(np.minimum(K * X.lo, K * X.hi), axis=1)
    kx_hi = np.sum(np.maximum(K * X.lo, K * X.hi), axis=1)
    if method == "reachable":
        lo, hi = U.lo - kx_hi, U.hi - kx_lo
    elif method == "pontryagin":
        lo, hi = U.lo - kx_lo, U.hi - kx_hi
        bad = np.flatnonzero(lo > hi + 1e-12)
        if bad.size:
            raise DesignError(f"feedback consumes the whole input range on channel(s) {bad.tolist()}")
        if U.contains_origin() and X.contains_origin() and np.allclose(U.lo, -U.hi) and np.allclose(X.lo, -X.hi):
            return float(np.max(U.halfwidth - np.abs(K) @ X.halfwidth))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))


def _xr_box(rho_r: float, X: Box) -> Box:
    return Box.omega(rho_r, X.dim).intersect(X)


def stability_margins(norms: NormTable, bounds: UncertaintyBounds, rho_r: float, gamma1: float,
                      uopt: float, X: Box) -> tuple[float, float]:
    """Slack of the two stability conditions (both must be positive)."""
    Xr = _xr_box(rho_r, X)
    Xa = _xr_box(rho_r + gamma1, X)
    m_a = (rho_r - norms.h_xm * uopt - norms.h_xu * bounds.b_w - norms.rho_in
           - norms.g_xm * bounds.b_f(Xr))
    m_b = 1.0 - norms.g_xm * bounds.L_f(Xa)
    return m_a, m_b


def check_stability(norms, bounds, rho_r, gamma1, uopt, X) -> bool:
    if rho_r <= 0:
        raise ValueError("rho_r must be positive")
    return all(m > 0 for m in stability_margins(norms, bounds, rho_r, gamma1, uopt, X))


def solve_rho_r(norms: NormTable, bounds: UncertaintyBounds, gamma1: float, uopt: float, X: Box,
                margin: float = RHO_MARGIN, rtol: float = 1e-6, npts: int = 200,
                rho_max: float | None = None):
    """Smallest rho_r in [rho_in + margin, rho_max] meeting both conditions.

    rho_max defaults to 10 max hw(X).  Returns (rho_r, margins) or (None, margins
    at the last grid point).
    """
    lo = norms.rho_in + margin
    hi = 10.0 * float(np.max(X.halfwidth)) if rho_max is None else float(rho_max)
    ok = lambda r: check_stability(norms, bounds, r, gamma1, uopt, X)
    if ok(lo):
        return lo, stability_margins(norms, bounds, lo, gamma1, uopt, X)
    if hi <= lo:
        return None, stability_margins(norms, bounds, lo, gamma1, uopt, X)
    grid = np.geomspace(lo, hi, npts)
    prev = lo
    for r in grid[1:]:
        if ok(r):
            a, b = prev, r
            while b - a > rtol * b:
                mid = 0.5 * (a + b)
                a, b = (a, mid) if ok(mid) else (mid, b)
            return b, stability_margins(norms, bounds, b, gamma1, uopt, X)
        prev = r
    return None, stability_margins(norms, bounds, hi, gamma1, uopt, X)


def transform_matrix(n: int, i: int, offdiag: float) -> np.ndarray:
    d = np.full(n, float(offdiag))
    d[i] = 1.0
    return np.diag(d)


def channel_norms(plant: LtiPlant, Kx, filters: FilterBank, X0: Box, offdiag: float) -> dict:
    """Per-channel transformed norms: G, H_xm, H_xu and rho_in for every state channel."""
    n = plant.n
    out = {"g": np.zeros(n), "h_xm": np.zeros(n), "h_xu": np.zeros(n), "rho_in": np.zeros(n)}
    r0 = X0.max_norm()
    for i in range(n):
        T = transform_matrix(n, i, offdiag)
        out["g"][i] = l1_norm(*gxm_realization(plant, Kx, filters, T))
        out["h_xm"][i] = l1_norm(*hxm_realization(plant, Kx, T))
        out["h_xu"][i] = l1_norm(*hxu_realization(plant, Kx, T))
        out["rho_in"][i] = resolvent_s_norm(plant, Kx, T) * r0 if r0 > 0 else 0.0
    return out


def per_channel_state_bounds(plant: LtiPlant, Kx, filters: FilterBank, bounds: UncertaintyBounds,
                             config: L1Config, rho_r: float, uopt: float, X0: Box,
                             b_f: float | None = None, X: Box | None = None, cn: dict | None = None):
    """(check_rho_r, tilde_rho) for every state channel.

    b_f defaults to the bound over Omega(rho_r) intersected with X.
    The transformed stability inequality is linear in check_rho_r, so its
    infimum is computed directly.
    """
    if b_f is None:
        if X is None:
            raise ValueError("either b_f or X is required")
        b_f = bounds.b_f(_xr_box(rho_r, X))
    if cn is None:
        cn = channel_norms(plant, Kx, filters, X0, config.Tx_offdiag)
    inf = cn["g"] * b_f + cn["h_xm"] * uopt + cn["h_xu"] * bounds.b_w + cn["rho_in"]
    check = inf * (1 + STRICT) + STRICT
    bad = np.flatnonzero(~np.isfinite(check))
    if bad.size:
        raise DesignError(f"per-channel bound infeasible on channel(s) {bad.tolist()}")
    tilde = cn["g"] * b_f + cn["h_xu"] * bounds.b_w + config.gamma1
    return check, tilde


def fixed_point_bf(plant, Kx, filters, bounds, config, rho_r, uopt, X0, X, cn=None, max_iter=50):
    """Shrink X_r until b_f over it stops decreasing by more than tol.

    Returns (Xr, b_f used for the final bounds, check_rho_r, tilde_rho, history).
    The bounds returned were computed with b_f over the returned Xr.
    """
    if cn is None:
        cn = channel_norms(plant, Kx, filters, X0, config.Tx_offdiag)
    Xr = _xr_box(rho_r, X)
    bf_old = bounds.b_f(Xr)
    history = [bf_old]
    for _ in range(max_iter):
        check, tilde = per_channel_state_bounds(plant, Kx, filters, bounds, config, rho_r, uopt,
                                                X0, b_f=bf_old, cn=cn)
        Xr_new = Box.symmetric(check).intersect(X).intersect(Xr)
        bf_new = bounds.b_f(Xr_new)
        history.append(bf_new)
        if not bf_old - bf_new > config.tol:
            return Xr, bf_old, check, tilde, history
        Xr, bf_old = Xr_new, bf_new
    raise DesignError(f"b_f fixed point did not converge: last values {history[-2:]}")


def input_bounds(filters: FilterBank, b_fj_Xr, Kx, tilde_rho, gamma2: float, c_norm=None):
    c_norm = np.ones(filters.m) if c_norm is None else np.asarray(c_norm)
    rho_ua = c_norm * np.asarray(b_fj_Xr, dtype=float) + gamma2
    tilde_rho_u = rho_ua + np.abs(np.atleast_2d(Kx)) @ np.asarray(tilde_rho)
    return rho_ua, tilde_rho_u


def tighten(X: Box, U: Box, tilde_rho, tilde_rho_u):
    Xn = box_pontryagin_diff(X, Box.symmetric(tilde_rho))
    Un = box_pontryagin_diff(U, Box.symmetric(tilde_rho_u))
    for name, B in (("state", Xn), ("input", Un)):
        if B.empty:
            raise DesignError(f"tightened {name} set is empty on axis {[a + 1 for a in B.empty_axes()]}")
    return Xn, Un


def design_l1(plant: LtiPlant, Kx, bounds: UncertaintyBounds, X: Box, U: Box, X0: Box,
              config: L1Config) -> TighteningReport:
    """Full offline pipeline: bounds on the tube, adaptive input and tightened sets."""
    Kx = np.atleast_2d(np.asarray(Kx, dtype=float))
    if not is_hurwitz(plant.closed_loop(Kx)):
        raise DesignError("A + B Kx is not Hurwitz")
    caveats = []
    if config.scale_w and plant.Bu.shape[1]:
        Bu_bar, Lam = scale_w(plant, bounds.b_wj)
        dplant = plant.with_Bu(Bu_bar)
    else:
        Lam = np.eye(plant.Bu.shape[1])
        dplant = plant
    uopt = uopt_bound(U, X, Kx, config.uopt_method)
    filters = config.filters
    rho_r, margins = None, None
    for esc in range(config.max_escalations + 1):
        norms = compute_norms(dplant, Kx, filters, config.Ae, X0)
        rho_r, margins = solve_rho_r(norms, bounds, config.gamma1, uopt, X, rho_max=config.rho_max)
        if rho_r is not None:
            break
        # the filter only enters through ||G||; if the rest already exceeds the search range,
        # no bandwidth can help
        rho_hi = 10.0 * float(np.max(X.halfwidth)) if config.rho_max is None else config.rho_max
        fixed = norms.rho_in + norms.h_xm * uopt + norms.h_xu * bounds.b_w
        if fixed >= rho_hi:
            raise DesignError(f"stability condition infeasible for any filter: rho_in + ||H_xm|| uopt"
                              f" + ||H_xu|| b_w = {fixed:.4g} exceeds the rho_r range {rho_hi:.4g}")
        log.info("stability conditions fail at kf=%s (margins %s); widening filters", filters.kf, margins)
        filters = filters.scaled(config.kf_growth)
    else:
        raise DesignError(f"no filter bandwidth satisfies the stability conditions; last margins {margins}")

    cn = channel_norms(dplant, Kx, filters, X0, config.Tx_offdiag)
    Xr, b_f_Xr, check, tilde, hist = fixed_point_bf(dplant, Kx, filters, bounds, config, rho_r,
                                                    uopt, X0, X, cn=cn)
    if np.any(check > rho_r * (1 + 1e-6)):
        raise DesignError("per-channel bound exceeds the uniform bound")
    Xa = Box.symmetric(check + config.gamma1).intersect(X)
    L_f_Xa = bounds.L_f(Xa)
    b_f_Xa = bounds.b_f(Xa)
    if norms.g_xm * L_f_Xa >= 1:
        raise DesignError("Lipschitz stability condition fails on X_a")
    T_final = select_T(norms, L_f_Xa, config.gamma1, (b_f_Xa, bounds.b_w), config.Ae, dplant,
                       T_start=config.T_theory)
    alpha = alpha_constants(config.Ae, dplant, T_final, b_f_Xa, bounds.b_w)
    gamma2 = float(np.max(norms.c_norm)) * L_f_Xa * config.gamma1 + norms.c_bdag_norm * alpha.gamma0
    b_fj_Xr = bounds.b_fj(Xr)
    rho_ua, tilde_u = input_bounds(filters, b_fj_Xr, Kx, tilde, gamma2, norms.c_norm)
    Xn, Un = tighten(X, U, tilde, tilde_u)
    if config.T > T_final:
        caveats.append(f"runtime T={config.T:g} exceeds the certified T={T_final:g}; "
                       "bounds are not guaranteed at the runtime rate")
    caveats.append("feedthrough: biproper L1 norms include ||D||_inf")
    if config.uopt_method == "reachable":
        caveats.append("uopt bound: reachable-set interval bound")
    return TighteningReport(
        rho_r=float(rho_r), rho=float(rho_r + config.gamma1), check_rho_r=check, tilde_rho=tilde,
        rho_ua=rho_ua, tilde_rho_u=tilde_u, gamma2=float(gamma2), Xr=Xr, Xa=Xa, Xn=Xn, Un=Un,
        Lambda=Lam, uopt_bound=uopt, filters_final=filters, T_final=T_final,
        gamma0=alpha.gamma0, b_f_Xr=float(b_f_Xr), b_fj_Xr=b_fj_Xr, L_f_Xa=float(L_f_Xa),
        b_f_Xa=float(b_f_Xa), b_w=bounds.b_w, norms=norms, alpha=alpha, Kx=Kx,
        Bu_design=dplant.Bu, gamma1=config.gamma1, T_runtime=config.T, escalations=esc,
        bf_history=hist, channel_norms={k: v.tolist() for k, v in cn.items()}, caveats=caveats)
