"""L1 norms of state-space systems and the sampled-estimation constants.

All norms use the induced infinity norm of the impulse-response matrix,
integrated over time, plus the induced infinity norm of any direct
feedthrough term.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_simpson

from .linalg import Box, DesignError, LtiPlant, integrated_exponential, is_hurwitz

# 7/15-point Gauss-Kronrod nodes and weights on [-1, 1]
_XK = np.array([
    -0.991455371120812639, -0.949107912342758525, -0.864864423359769073,
    -0.741531185599394440, -0.586087235467691130, -0.405845151377397167,
    -0.207784955007898468, 0.0, 0.207784955007898468, 0.405845151377397167,
    0.586087235467691130, 0.741531185599394440, 0.864864423359769073,
    0.949107912342758525, 0.991455371120812639])
_WK = np.array([
    0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
    0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
    0.204432940075298892, 0.209482141084727828, 0.204432940075298892,
    0.190350578064785410, 0.169004726639267903, 0.140653259715525919,
    0.104790010322250184, 0.063092092629978553, 0.022935322010529225])
_WG = np.zeros(15)
_WG[1::2] = [0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
             0.417959183673469388, 0.381830050505118945, 0.279705391489276668,
             0.129484966168869693]

ENVELOPE_FLOOR = 1e-10
HORIZON_CAP = 1e3


def inf_norm(M) -> float:
    """Induced infinity norm (max absolute row sum); 0 for empty matrices."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.max(np.sum(np.abs(M), axis=-1))) if M.size else 0.0


def _impulse_norms(A, B, C, ts) -> np.ndarray:
    """||C e^{A t} B||_inf at each t (batched exponentials)."""
    E = sla.expm(np.asarray(ts)[:, None, None] * A[None])
    return np.max(np.sum(np.abs(C @ E @ B), axis=-1), axis=-1)


def _horizon(A, B, C) -> float:
    """Time after which the impulse-response envelope is below 1e-10 of its peak."""
    sigma = -np.max(np.linalg.eigvals(A).real)
    t_cap = HORIZON_CAP / sigma
    ts = np.geomspace(1e-6 / sigma, t_cap, 400)
    ts = np.concatenate([[0.0], ts])
    env = np.linalg.norm(sla.expm(ts[:, None, None] * A[None]), ord=np.inf, axis=(1, 2))
    vals = _impulse_norms(A, B, C, ts)
    peak = max(float(np.max(vals)), 1e-300)
    # the envelope of e^{At} bounds every later sample of the integrand up to the gain of B and C
    gain = max(inf_norm(C) * inf_norm(B), 1e-300)
    below = np.flatnonzero(env * gain < ENVELOPE_FLOOR * peak)
    return float(ts[below[0]]) if below.size else t_cap


def _gauss_kronrod(fun, a: float, b: float, rtol=1e-10, atol=1e-14, max_intervals=20000) -> float:
    """Vectorised adaptive Gauss-Kronrod quadrature of a scalar integrand.

    Intervals are refined breadth-first and the final sum is taken in
    left-to-right order, so results do not depend on evaluation order.
    """
    edges = np.geomspace(max((b - a) * 1e-8, 1e-300), b - a, 48) + a
    edges = np.concatenate([[a], edges])
    active = np.stack([edges[:-1], edges[1:]], axis=1)
    done_lo, done_val = [], []
    total_est = None
    while active.size:
        mid = 0.5 * (active[:, 0] + active[:, 1])
        half = 0.5 * (active[:, 1] - active[:, 0])
        ts = (mid[:, None] + half[:, None] * _XK[None]).ravel()
        f = fun(ts).reshape(-1, 15)
        k = half * (f @ _WK)
        g = half * (f @ _WG)
        err = np.abs(k - g)
        if total_est is None:
            total_est = float(np.sum(k))
        tol = max(atol, rtol * abs(total_est))
        share = tol * (2 * half) / (b - a)
        ok = err <= share
        done_lo.append(active[ok, 0])
        done_val.append(k[ok])
        bad = active[~ok]
        if len(done_val) > 60 or sum(map(len, done_val)) + 2 * len(bad) > max_intervals:
            done_lo.append(bad[:, 0])
            done_val.append(k[~ok])
            break
        m = 0.5 * (bad[:, 0] + bad[:, 1])
        active = np.concatenate([np.stack([bad[:, 0], m], 1), np.stack([m, bad[:, 1]], 1)])
        total_est = float(np.sum(np.concatenate(done_val)) + np.sum(k[~ok]))
    lo = np.concatenate(done_lo)
    val = np.concatenate(done_val)
    return float(np.sum(val[np.argsort(lo, kind="stable")]))


def l1_norm(A, B, C=None, D=None) -> float:
    """||D||_inf + int_0^inf ||C e^{At} B||_inf dt for Hurwitz A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.eye(A.shape[0]) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    feed = 0.0 if D is None else inf_norm(D)
    if B.size == 0 or not np.any(B) or not np.any(C):
        return feed
    if not is_hurwitz(A):
        raise DesignError("L1 norm diverges: A is not Hurwitz")
    t_end = _horizon(A, B, C)
    integral = _gauss_kronrod(lambda ts: _impulse_norms(A, B, C, ts), 0.0, t_end)
    return feed + integral


def l1_norm_strictly_proper(A, B_in) -> float:
    """int_0^inf ||e^{At} B_in||_inf dt."""
    return l1_norm(A, B_in)


@dataclass(frozen=True)
class FilterBank:
    """Diagonal bank of first-order low-pass filters kf_j / (s + kf_j)."""

    kf: np.ndarray

    def __post_init__(self):
        kf = np.atleast_1d(np.asarray(self.kf, dtype=float)).copy()
        if np.any(kf <= 0):
            raise ValueError("filter bandwidths must be positive")
        kf.flags.writeable = False
        object.__setattr__(self, "kf", kf)

    @classmethod
    def uniform(cls, kf: float, m: int) -> "FilterBank":
        return cls(np.full(m, float(kf)))

    @property
    def m(self) -> int:
        return self.kf.size

    def scaled(self, factor: float) -> "FilterBank":
        return FilterBank(self.kf * factor)

    def realization(self):
        """(A, B, C) with A = -Kf, B = Kf, C = I."""
        K = np.diag(self.kf)
        return -K, K, np.eye(self.m)


# realizations of the transfer matrices used by the design


def hxm_realization(plant: LtiPlant, Kx, T=None):
    Am = plant.closed_loop(Kx)
    C = np.eye(plant.n) if T is None else T
    return Am, plant.B, C


def hxu_realization(plant: LtiPlant, Kx, T=None):
    Am = plant.closed_loop(Kx)
    C = np.eye(plant.n) if T is None else T
    return Am, plant.Bu, C


def gxm_realization(plant: LtiPlant, Kx, filters: FilterBank, T=None):
    """(sI - Am)^{-1} B (I - C(s)) with filter states appended."""
    n, m = plant.n, plant.m
    Am = plant.closed_loop(Kx)
    Kf = np.diag(filters.kf)
    A = np.block([[Am, -plant.B], [np.zeros((m, n)), -Kf]])
    B = np.vstack([plant.B, Kf])
    C = np.hstack([np.eye(n) if T is None else T, np.zeros((n, m))])
    return A, B, C


def s_resolvent_realization(plant: LtiPlant, Kx, T=None):
    """s (sI - Am)^{-1} = I + Am (sI - Am)^{-1}: returns (A, B, C, D)."""
    Am = plant.closed_loop(Kx)
    Tm = np.eye(plant.n) if T is None else T
    return Am, np.eye(plant.n), Tm @ Am, Tm


def c_bdag_realization(plant: LtiPlant, filters: FilterBank, Ae):
    """C(s) B^dagger (sI - Ae): biproper, returned as (A, B, C, D)."""
    Bd = plant.B_dagger
    Kf = np.diag(filters.kf)
    return -Kf, -Kf @ Bd - Bd @ Ae, Kf, Kf @ Bd


def hxm_c_bdag_realization(plant: LtiPlant, Kx, filters: FilterBank, Ae):
    """H_xm(s) C(s) B^dagger (sI - Ae): strictly proper cascade."""
    n, m = plant.n, plant.m
    Am = plant.closed_loop(Kx)
    Af, Bf, Cf, Df = c_bdag_realization(plant, filters, Ae)
    A = np.block([[Am, plant.B @ Cf], [np.zeros((m, n)), Af]])
    B = np.vstack([plant.B @ Df, Bf])
    C = np.hstack([np.eye(n), np.zeros((n, m))])
    return A, B, C


def l1_norm_g_xm(plant: LtiPlant, Kx, filters: FilterBank, T=None) -> float:
    return l1_norm(*gxm_realization(plant, Kx, filters, T))


def resolvent_s_norm(plant: LtiPlant, Kx, T=None) -> float:
    return l1_norm(*s_resolvent_realization(plant, Kx, T))


def rho_in(plant: LtiPlant, Kx, X0: Box, T=None) -> float:
    r0 = X0.max_norm()
    if r0 == 0.0:
        return 0.0
    return resolvent_s_norm(plant, Kx, T) * r0


def filter_norms(filters: FilterBank) -> np.ndarray:
    """||C_j||_L1, which is 1 for first-order unit-DC-gain filters."""
    return np.ones(filters.m)


@dataclass(frozen=True)
class NormTable:
    h_xm: float
    h_xu: float
    g_xm: float
    rho_in: float
    hxm_c_bdag: float
    c_norm: np.ndarray
    c_bdag_norm: float
    s_resolvent: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_norm"] = np.asarray(self.c_norm).tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "NormTable":
        d = dict(d)
        d["c_norm"] = np.asarray(d["c_norm"])
        return cls(**d)


def compute_norms(plant: LtiPlant, Kx, filters: FilterBank, Ae, X0: Box) -> NormTable:
    s_res = resolvent_s_norm(plant, Kx)
    return NormTable(
        h_xm=l1_norm(*hxm_realization(plant, Kx)),
        h_xu=l1_norm(*hxu_realization(plant, Kx)),
        g_xm=l1_norm_g_xm(plant, Kx, filters),
        rho_in=s_res * X0.max_norm(),
        hxm_c_bdag=l1_norm(*hxm_c_bdag_realization(plant, Kx, filters, Ae)),
        c_norm=filter_norms(filters),
        c_bdag_norm=l1_norm(*c_bdag_realization(plant, filters, Ae)),
        s_resolvent=s_res,
    )


@dataclass(frozen=True)
class AlphaConstants:
    a0: float
    a1: float
    a2: float
    a3: float
    gamma0: float
    T: float


def _grid_constants(Ae, B, Bu, T: float, npts: int):
    n = Ae.shape[0]
    ts = np.linspace(0.0, T, npts)
    E = sla.expm(ts[:, None, None] * Ae[None])
    EB = np.max(np.sum(np.abs(E @ B), axis=-1), axis=-1)
    EBu = np.max(np.sum(np.abs(E @ Bu), axis=-1), axis=-1) if Bu.size else np.zeros(npts)
    # int_0^t ||e^{Ae(t-tau)} B|| dtau = int_0^t ||e^{Ae s} B|| ds
    a0 = float(np.max(cumulative_simpson(EB, x=ts, initial=0.0)))
    a1 = float(np.max(cumulative_simpson(EBu, x=ts, initial=0.0)))
    a2 = float(np.max(np.linalg.norm(E, ord=np.inf, axis=(1, 2))))
    ET = E[-1]
    PhiT = integrated_exponential(Ae, T)
    G = np.linalg.solve(PhiT, ET)
    # a3 = max_t int_0^t ||e^{Ae(t-tau)} Phi^{-1}(T) e^{Ae T}|| dtau
    EG = np.linalg.norm(E @ G, ord=np.inf, axis=(1, 2))
    a3 = float(np.max(cumulative_simpson(EG, x=ts, initial=0.0)))
    return np.array([a0, a1, a2, a3])


def alpha_constants(Ae, plant: LtiPlant, T: float, b_f: float, b_w: float,
                    rtol: float = 1e-8, npts: int = 65) -> AlphaConstants:
    if T <= 0:
        raise ValueError("T must be positive")
    Ae = np.atleast_2d(np.asarray(Ae, dtype=float))
    prev = _grid_constants(Ae, plant.B, plant.Bu, T, npts)
    while npts < 2 ** 14:
        npts = 2 * npts - 1
        cur = _grid_constants(Ae, plant.B, plant.Bu, T, npts)
        converged = np.all(np.abs(cur - prev) <= rtol * np.maximum(np.abs(cur), 1e-300))
        prev = cur
        if converged:
            break
    a0, a1, a2, a3 = map(float, prev)
    gamma0 = (b_f * a0 + a1 * b_w) * (a2 + a3 + 1.0)
    return AlphaConstants(a0, a1, a2, a3, gamma0, float(T))




def sample_time_margin(norms: NormTable, L_f: float, gamma1: float, gamma0: float) -> float:
    """gamma1 minus the left side of the sample-time condition."""
    denom = 1.0 - norms.g_xm * L_f
    if denom <= 0:
        return -np.inf
    return gamma1 - norms.hxm_c_bdag / denom * gamma0


def select_T(norms: NormTable, L_f: float, gamma1: float, bounds, Ae, plant: LtiPlant,
             T_start: float = 1e-1) -> float:
    """Largest T on the decade grid T_start, T_start/10, ... (down to 1e-12)
    meeting the sample-time condition."""
    b_f, b_w = bounds
    grid = [T_start * 10.0 ** -k for k in range(40) if T_start * 10.0 ** -k >= 1e-12 * (1 - 1e-9)]
    if norms.g_xm * L_f >= 1.0:
        raise DesignError(f"stability condition fails: ||G|| L_f = {norms.g_xm * L_f:.4g} >= 1")
    margin = -np.inf
    for T in grid:
        g0 = alpha_constants(Ae, plant, T, b_f, b_w).gamma0
        margin = sample_time_margin(norms, L_f, gamma1, g0)
        if margin > 0:
            return float(T)
    raise DesignError(f"no sample time on the grid meets the condition (last margin {margin:.3g})")
