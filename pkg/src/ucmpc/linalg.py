"""Linear-algebra substrate: plants, boxes, gains and small matrix helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

HURWITZ_TOL = 1e-9


class DesignError(RuntimeError):
    """Raised when a design step is infeasible."""


def _mat(a, rows=None, cols=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {a.shape}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {a.shape}")
    return a


def is_hurwitz(A) -> bool:
    A = _mat(A)
    return bool(np.all(np.linalg.eigvals(A).real < -HURWITZ_TOL))


def pseudo_inverse(B) -> np.ndarray:
    """Left inverse (B^T B)^{-1} B^T of a full-column-rank matrix."""
    B = _mat(B)
    G = B.T @ B
    if np.linalg.matrix_rank(B) < B.shape[1]:
        raise np.linalg.LinAlgError("B is rank deficient")
    return np.linalg.solve(G, B.T)


def null_space_basis(B) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of range(B)."""
    return sla.null_space(_mat(B).T)


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    return sla.expm(_mat(A) * t)


def integrated_exponential(A, t: float) -> np.ndarray:
    """int_0^t e^{A s} ds, from the augmented exponential (no inverse of A needed)."""
    A = _mat(A)
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    return sla.expm(M * t)[:n, n:]


@dataclass(frozen=True)
class LtiPlant:
    """x' = A x + B (u + f) + Bu w, y = C x.

    orth_tol loosens the Bu^T B = 0 check for plants whose unmatched
    directions are given rather than constructed (entries are compared
    after normalising the columns).
    """

    A: np.ndarray
    B: np.ndarray
    Bu: np.ndarray
    C: np.ndarray | None = None
    orth_tol: float = 1e-10

    def __post_init__(self):
        A = _mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        m = B.shape[1]
        Bu = np.asarray(self.Bu, dtype=float).reshape(n, n - m) if n > m else np.zeros((n, 0))
        C = np.eye(n) if self.C is None else _mat(self.C, cols=n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Bu", Bu)
        object.__setattr__(self, "C", C)
        if np.linalg.matrix_rank(B) < m:
            raise ValueError("B must have full column rank")
        if np.linalg.matrix_rank(np.hstack([B, Bu])) < n:
            raise ValueError("[B Bu] must span the state space")
        if Bu.shape[1]:
            Bn = B / np.linalg.norm(B, axis=0)
            Bun = Bu / np.linalg.norm(Bu, axis=0)
            if np.max(np.abs(Bun.T @ Bn)) > self.orth_tol:
                raise ValueError("Bu is not orthogonal to B")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def B_dagger(self) -> np.ndarray:
        return pseudo_inverse(self.B)

    def with_Bu(self, Bu) -> "LtiPlant":
        return LtiPlant(self.A, self.B, Bu, self.C, orth_tol=max(self.orth_tol, 1e-10))

    def closed_loop(self, Kx) -> np.ndarray:
        return self.A + self.B @ _mat(Kx, rows=self.m, cols=self.n)

    @classmethod
    def from_B(cls, A, B, C=None) -> "LtiPlant":
        """Builds Bu as an orthonormal basis of range(B)^perp."""
        return cls(A, B, null_space_basis(B), C)


def decompose_uncertainty(f_total, plant: LtiPlant):
    """Split f_total into (f_m, f_um) with B f_m + Bu f_um = f_total.

    Equals (B^dagger f, Bu^dagger f) when Bu is orthogonal to B.
    """
    f_total = np.asarray(f_total, dtype=float)
    sol = np.linalg.solve(np.hstack([plant.B, plant.Bu]), f_total)
    return sol[: plant.m], sol[plant.m:]


@dataclass(frozen=True)
class FeedbackGain:
    Kx: np.ndarray
    plant: LtiPlant | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        K = _mat(self.Kx)
        object.__setattr__(self, "Kx", K)
        if self.plant is not None and not is_hurwitz(self.plant.closed_loop(K)):
            raise ValueError("A + B Kx is not Hurwitz")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box lo <= x <= hi; `empty` marks an infeasible set."""

    lo: np.ndarray
    hi: np.ndarray
    empty: bool = False

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape:
            raise ValueError("lo and hi shapes differ")
        empty = bool(self.empty) or bool(np.any(lo > hi))
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "empty", empty)

    @classmethod
    def symmetric(cls, radius) -> "Box":
        r = np.atleast_1d(np.asarray(radius, dtype=float))
        return cls(-r, r)

    @classmethod
    def omega(cls, rho: float, n: int) -> "Box":
        """Infinity-norm ball of radius rho."""
        return cls.symmetric(np.full(n, float(rho)))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.hi + self.lo)

    @property
    def max_abs(self) -> np.ndarray:
        """Per-axis max |x_i| over the box."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def max_norm(self) -> float:
        """max ||x||_inf over the box (attained at a vertex)."""
        return float(np.max(self.max_abs)) if self.dim else 0.0

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return (not self.empty) and bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_origin(self) -> bool:
        return self.contains(np.zeros(self.dim))

    def intersect(self, other: "Box") -> "Box":
        return Box(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi),
                   self.empty or other.empty)

    def subset_of(self, other: "Box", tol: float = 1e-12) -> bool:
        if self.empty:
            return True
        return bool(np.all(self.lo >= other.lo - tol) and np.all(self.hi <= other.hi + tol))

    def minkowski_sum(self, other: "Box") -> "Box":
        return Box(self.lo + other.lo, self.hi + other.hi, self.empty or other.empty)

    def empty_axes(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.lo > self.hi)]

    def vertices(self) -> np.ndarray:
        grids = np.meshgrid(*[(l, h) for l, h in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "empty": self.empty}

    @classmethod
    def from_dict(cls, d) -> "Box":
        return cls(d["lo"], d["hi"], d.get("empty", False))


def box_pontryagin_diff(X: Box, Y: Box) -> Box:
    """X minus Y in the Pontryagin sense; per-axis interval subtraction."""
    if not Y.contains_origin():
        raise ValueError("subtrahend must contain the origin")
    return Box(X.lo - Y.lo, X.hi - Y.hi, X.empty)
