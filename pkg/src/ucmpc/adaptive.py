"""Online L1 adaptive element: state predictor, sampled estimation law, filter."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .linalg import integrated_exponential
from .norms import FilterBank


class NumericFault(RuntimeError):
    pass


@dataclass(frozen=True)
class PredictorState:
    x_hat: np.ndarray
    sigma_hat: np.ndarray
    x_tilde: np.ndarray
    t_last_update: float = 0.0

    @classmethod
    def start(cls, x0) -> "PredictorState":
        x0 = np.asarray(x0, dtype=float)
        z = np.zeros_like(x0)
        return cls(x0.copy(), z, z.copy(), 0.0)


@dataclass(frozen=True)
class FilterState:
    """Filter states; with unit DC gain first-order filters the output equals the state."""

    state: np.ndarray

    @property
    def u_a(self) -> np.ndarray:
        return self.state

    @classmethod
    def zeros(cls, m: int) -> "FilterState":
        return cls(np.zeros(m))


def predictor_rhs(x_hat, x, u_opt, u_a, sigma_hat, Am, B, Ae):
    x_tilde = x_hat - x
    return Am @ x + B @ (u_opt + u_a) + sigma_hat + Ae @ x_tilde


def predictor_step(ps: PredictorState, x, u_opt, u_a, dt: float, plant, Kx, Ae) -> PredictorState:
    """One RK4 step of the predictor with x, inputs and sigma_hat held over dt."""
    Am = plant.closed_loop(Kx)
    B = plant.B
    Ae = np.atleast_2d(Ae)
    x = np.asarray(x, dtype=float)
    f = lambda xh: predictor_rhs(xh, x, u_opt, u_a, ps.sigma_hat, Am, B, Ae)
    k1 = f(ps.x_hat)
    k2 = f(ps.x_hat + 0.5 * dt * k1)
    k3 = f(ps.x_hat + 0.5 * dt * k2)
    k4 = f(ps.x_hat + dt * k3)
    xh = ps.x_hat + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(xh)):
        raise NumericFault("non-finite predictor state")
    return PredictorState(xh, ps.sigma_hat, xh - x, ps.t_last_update)


@lru_cache(maxsize=64)
def _gain_cached(Ae_bytes: bytes, n: int, T: float) -> np.ndarray:
    Ae = np.frombuffer(Ae_bytes).reshape(n, n)
    Phi = integrated_exponential(Ae, T)
    eT = sla.expm(Ae * T)
    cond = np.linalg.cond(Phi)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn("Phi(T) is numerically singular; using the small-T limit 1/T")
        return -eT / T
    return -np.linalg.solve(Phi, eT)


def estimation_gain(Ae, T: float) -> np.ndarray:
    """-Phi(T)^{-1} e^{Ae T}, with Phi(T) = int_0^T e^{Ae s} ds."""
    Ae = np.ascontiguousarray(np.atleast_2d(np.asarray(Ae, dtype=float)))
    return _gain_cached(Ae.tobytes(), Ae.shape[0], float(T)).copy()


def estimation_update(ps: PredictorState, T: float, Ae, t: float | None = None,
                      gain: np.ndarray | None = None) -> PredictorState:
    """sigma_hat = -Phi(T)^{-1} e^{Ae T} x_tilde, held until the next update."""
    if gain is None:
        gain = estimation_gain(Ae, T)
    sig = gain @ ps.x_tilde
    return PredictorState(ps.x_hat, sig, ps.x_tilde, ps.t_last_update if t is None else t)


def filter_coefficients(filters: FilterBank, dt: float):
    a = np.exp(-filters.kf * dt)
    return a, 1.0 - a


def adaptive_input(fs: FilterState, sigma_hat, B_dagger, dt: float, filters: FilterBank,
                   coeffs=None):
    """Feed -B^dagger sigma_hat through the exact ZOH discretisation of C(s)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a, b = filter_coefficients(filters, dt) if coeffs is None else coeffs
    inp = -np.asarray(B_dagger) @ np.asarray(sigma_hat)
    new = a * fs.state + b * inp
    return FilterState(new), new


class L1Element:
    """Stateful wrapper used by the simulator.

    The predictor is advanced by the simulator together with the plant;
    this object owns the estimation clock and the filter.
    """

    def __init__(self, plant, Kx, Ae, filters: FilterBank, T: float, x0):
        self.plant = plant
        self.Kx = np.atleast_2d(Kx)
        self.Am = plant.closed_loop(self.Kx)
        self.Ae = np.atleast_2d(np.asarray(Ae, dtype=float))
        self.filters = filters
        self.T = float(T)
        self.B_dagger = plant.B_dagger
        self.gain = estimation_gain(self.Ae, self.T)
        self.ps = PredictorState.start(x0)
        self.fs = FilterState.zeros(plant.m)
        self._coeffs = {}

    def estimate(self, x, t: float):
        self.ps = PredictorState(self.ps.x_hat, self.ps.sigma_hat, self.ps.x_hat - x, self.ps.t_last_update)
        self.ps = estimation_update(self.ps, self.T, self.Ae, t=t, gain=self.gain)

    def filter(self, dt: float) -> np.ndarray:
        c = self._coeffs.get(dt)
        if c is None:
            c = self._coeffs[dt] = filter_coefficients(self.filters, dt)
        self.fs, ua = adaptive_input(self.fs, self.ps.sigma_hat, self.B_dagger, dt, self.filters, c)
        return ua

    def rhs(self, x_hat, x, u_opt, u_a):
        return predictor_rhs(x_hat, x, u_opt, u_a, self.ps.sigma_hat, self.Am, self.plant.B, self.Ae)
