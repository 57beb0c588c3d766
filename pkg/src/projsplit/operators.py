"""Maximal monotone test operators with closed-form resolvents.

Every operator here is immutable and every operation is a pure function of
its arguments.  Set-valued kinds (normal cones, scaled absolute-value
subdifferentials) report their values per coordinate as closed intervals,
which is what the brute-force oracle in :mod:`projsplit.problems` consumes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

PSD_TOL = 1e-10
MEMBERSHIP_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-12


class OperatorError(ValueError):
    """Invalid operator data or an unsupported operation for a kind."""


def as_vector(v) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise OperatorError(f"expected a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class EnlargementTriple:
    """A point ``(point, value, eps)`` asserting ``value in T^eps(point)``."""

    point: np.ndarray
    value: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "point", as_vector(self.point))
        object.__setattr__(self, "value", as_vector(self.value))
        if self.point.shape != self.value.shape:
            raise OperatorError("triple point and value differ in dimension")
        if not self.eps >= 0.0:
            raise OperatorError(f"enlargement eps must be >= 0, got {self.eps}")

    @property
    def dim(self) -> int:
        return self.point.shape[0]


class MonotoneOperator:
    """Base class.  Subclasses define ``dim``, ``resolvent_point`` and ``value_box``."""

    dim: int

    def _check(self, z) -> np.ndarray:
        z = as_vector(z)
        if z.shape[0] != self.dim:
            raise OperatorError(f"dimension mismatch: operator has dim {self.dim}, got {z.shape[0]}")
        return z

    def resolvent_point(self, lam: float, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_box(self, z: np.ndarray) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Per-coordinate bounds ``(lo, hi)`` of T(z); ``None`` where T(z) is empty."""
        raise NotImplementedError

    def lipschitz(self) -> float:
        """Lipschitz constant of the single-valued part (0 for pure cone/sign parts)."""
        return 0.0

    def as_affine(self) -> Optional["Affine"]:
        return None

    def breakpoints(self) -> list[np.ndarray]:
        """Per-coordinate values where the graph has a kink (used by grid scans)."""
        return [np.empty(0) for _ in range(self.dim)]


@dataclass(frozen=True, eq=False)
class Affine(MonotoneOperator):
    """T(z) = M z + q with M symmetric positive semidefinite."""

    M: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        q = as_vector(self.q)
        if M.shape != (q.shape[0], q.shape[0]):
            raise OperatorError(f"M has shape {M.shape} but q has length {q.shape[0]}")
        if not np.allclose(M, M.T, rtol=0.0, atol=PSD_TOL * max(1.0, np.abs(M).max())):
            raise OperatorError("Affine operator requires a symmetric matrix")
        M = 0.5 * (M + M.T)
        lam_min = np.linalg.eigvalsh(M).min() if M.size else 0.0
        if lam_min < -PSD_TOL:
            raise OperatorError(f"Affine operator requires M PSD (min eigenvalue {lam_min:.3e})")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "q", q)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def resolvent_point(self, lam, u):
        return np.linalg.solve(np.eye(self.dim) + lam * self.M, u - lam * self.q)

    def value_box(self, z):
        v = self.M @ z + self.q
        return v, v

    def lipschitz(self):
        return float(np.linalg.norm(self.M, 2))

    def as_affine(self):
        return self


@dataclass(frozen=True, eq=False)
class NormalConeBox(MonotoneOperator):
    """Normal cone of the box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = as_vector(self.lo), as_vector(self.hi)
        if lo.shape != hi.shape:
            raise OperatorError("box bounds differ in dimension")
        if np.any(lo > hi):
            raise OperatorError("NormalConeBox requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def resolvent_point(self, lam, u):
        return np.clip(u, self.lo, self.hi)

    def value_box(self, z):
        if np.any(z < self.lo) or np.any(z > self.hi):
            return None
        vlo = np.where(z == self.lo, -np.inf, 0.0)
        vhi = np.where(z == self.hi, np.inf, 0.0)
        return vlo, vhi

    def breakpoints(self):
        return [np.array([a, b]) for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True, eq=False)
class SubdiffAbsScaled(MonotoneOperator):
    """Subdifferential of ``sum_i weight_i |z_i|``."""

    weight: np.ndarray

    def __post_init__(self):
        wt = as_vector(self.weight)
        if np.any(wt < 0):
            raise OperatorError("SubdiffAbsScaled requires nonnegative weights")
        object.__setattr__(self, "weight", wt)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def resolvent_point(self, lam, u):
        return np.sign(u) * np.maximum(np.abs(u) - lam * self.weight, 0.0)

    def value_box(self, z):
        s = np.sign(z)
        vlo = np.where(s == 0, -self.weight, s * self.weight)
        vhi = np.where(s == 0, self.weight, s * self.weight)
        return vlo, vhi

    def breakpoints(self):
        return [np.array([0.0]) for _ in range(self.dim)]


@dataclass(frozen=True, eq=False)
class Shifted(MonotoneOperator):
    """T(z) = base(z) + shift."""

    base: MonotoneOperator
    shift: np.ndarray

    def __post_init__(self):
        shift = as_vector(self.shift)
        if shift.shape[0] != self.base.dim:
            raise OperatorError("shift dimension differs from the base operator")
        object.__setattr__(self, "shift", shift)

    @property
    def dim(self) -> int:
        return self.base.dim

    def resolvent_point(self, lam, u):
        return self.base.resolvent_point(lam, u - lam * self.shift)

    def value_box(self, z):
        box = self.base.value_box(z)
        if box is None:
            return None
        return box[0] + self.shift, box[1] + self.shift

    def lipschitz(self):
        return self.base.lipschitz()

    def as_affine(self):
        return self._affine

    @cached_property
    def _affine(self):
        aff = self.base.as_affine()
        return None if aff is None else Affine(aff.M, aff.q + self.shift)

    def breakpoints(self):
        return self.base.breakpoints()


@dataclass(frozen=True, eq=False)
class Scaled(MonotoneOperator):
    """T(z) = eta * base(z) with eta > 0."""

    base: MonotoneOperator
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise OperatorError(f"Scaled requires eta > 0, got {self.eta}")

    @property
    def dim(self) -> int:
        return self.base.dim

    def resolvent_point(self, lam, u):
        return self.base.resolvent_point(lam * self.eta, u)

    def value_box(self, z):
        box = self.base.value_box(z)
        if box is None:
            return None
        return self.eta * box[0], self.eta * box[1]

    def lipschitz(self):
        return self.eta * self.base.lipschitz()

    def as_affine(self):
        return self._affine

    @cached_property
    def _affine(self):
        aff = self.base.as_affine()
        return None if aff is None else Affine(self.eta * aff.M, self.eta * aff.q)

    def breakpoints(self):
        return self.base.breakpoints()


@dataclass(frozen=True, eq=False)
class Zero(MonotoneOperator):
    n: int

    @property
    def dim(self) -> int:
        return self.n

    def resolvent_point(self, lam, u):
        return u.copy()

    def value_box(self, z):
        v = np.zeros(self.n)
        return v, v

    def as_affine(self):
        return self._affine

    @cached_property
    def _affine(self):
        return Affine(np.zeros((self.n, self.n)), np.zeros(self.n))


def apply(op: MonotoneOperator, z) -> Optional[np.ndarray]:
    """Value of ``op`` at ``z`` when it is a singleton there, else ``None``."""
    z = op._check(z)
    box = op.value_box(z)
    if box is None:
        return None
    lo, hi = box
    if np.any(lo != hi):
        return None
    return lo.copy()


def resolvent(op: MonotoneOperator, lam: float, u) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``0 in lam*op(z') + z' - u``; returns ``(z', w)`` with ``lam*w + z' = u``."""
    if not lam > 0:
        raise OperatorError(f"resolvent parameter must be positive, got {lam}")
    u = op._check(u)
    zp = op.resolvent_point(lam, u)
    return zp, (u - zp) / lam


def min_enlargement(op: MonotoneOperator, z, v) -> float:
    """Smallest eps with ``v in op^eps(z)`` for affine operators (``inf`` if none).

    For T = M z + q the value is ``r' M^+ r / 4`` with ``r = v - T(z)`` when
    ``r`` lies in the range of M.
    """
    aff = op.as_affine()
    if aff is None:
        raise OperatorError(f"min_enlargement is unsupported for {type(op).__name__}")
    z, v = op._check(z), op._check(v)
    r = v - (aff.M @ z + aff.q)
    rnorm = np.linalg.norm(r)
    if rnorm == 0.0:
        return 0.0
    sol, *_ = np.linalg.lstsq(aff.M, r, rcond=None)
    if np.linalg.norm(aff.M @ sol - r) > MEMBERSHIP_TOL * max(1.0, rnorm):
        return float("inf")
    return max(0.25 * float(r @ sol), 0.0)


def transport(triples: Sequence[EnlargementTriple], weights: Sequence[float]) -> EnlargementTriple:
    """Weak transportation: convex combination of enlargement triples."""
    alpha = np.asarray(weights, dtype=float)
    if len(triples) == 0 or alpha.shape != (len(triples),):
        raise OperatorError("need one weight per triple")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise OperatorError(f"weights must be nonnegative and sum to 1 (sum={alpha.sum()!r})")
    Z = np.stack([t.point for t in triples])
    V = np.stack([t.value for t in triples])
    eps = np.array([t.eps for t in triples])
    zbar = alpha @ Z
    vbar = alpha @ V
    ebar = float(alpha @ (eps + np.einsum("ij,ij->i", Z - zbar, V)))
    if ebar < -WEIGHT_SUM_TOL * max(1.0, float(alpha @ np.abs(np.einsum("ij,ij->i", Z, V)))):
        raise OperatorError(f"transported eps is negative ({ebar:.3e}); triples are not from one monotone operator")
    return EnlargementTriple(zbar, vbar, max(ebar, 0.0))


def is_member(op: MonotoneOperator, triple: EnlargementTriple, slack: float = MEMBERSHIP_TOL) -> bool:
    """Certify ``triple.value in op^eps(triple.point)`` for affine operators."""
    return min_enlargement(op, triple.point, triple.value) <= triple.eps + slack
