"""Decomposable separators and the relaxed projection step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import EnlargementTriple, as_vector


class DegenerateSeparatorError(RuntimeError):
    """phi > 0 at a point while its gradient vanishes; an upstream triple is invalid."""


class ParameterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IterateState:
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        z, w = as_vector(self.z), as_vector(self.w)
        if z.shape != w.shape:
            raise ValueError("z and w must have the same dimension")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.z.shape[0]

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.z, self.w])

    @classmethod
    def zeros(cls, n: int) -> "IterateState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass(frozen=True, eq=False)
class Separator:
    """phi(z, w) = <z - x, b - w> + <z - y, a + w> - eps_x - eps_y.

    ``xtriple`` is (x, b, eps_x) for B and ``ytriple`` is (y, a, eps_y) for A.
    """

    xtriple: EnlargementTriple
    ytriple: EnlargementTriple
    grad_z: np.ndarray
    grad_w: np.ndarray
    offset: float

    @property
    def grad_norm_sq(self) -> float:
        return float(self.grad_z @ self.grad_z + self.grad_w @ self.grad_w)

    def is_flat(self) -> bool:
        return not (np.any(self.grad_z) or np.any(self.grad_w))


def build_separator(xt: EnlargementTriple, yt: EnlargementTriple) -> Separator:
    if xt.dim != yt.dim:
        raise ValueError(f"triples differ in dimension ({xt.dim} vs {yt.dim})")
    x, b, y, a = xt.point, xt.value, yt.point, yt.value
    # phi(0, 0) = -<x, b> - <y, a> - eps_x - eps_y
    offset = -float(x @ b) - float(y @ a) - xt.eps - yt.eps
    return Separator(xt, yt, a + b, x - y, offset)


def evaluate(sep: Separator, s: IterateState) -> float:
    x, b, ex = sep.xtriple.point, sep.xtriple.value, sep.xtriple.eps
    y, a, ey = sep.ytriple.point, sep.ytriple.value, sep.ytriple.eps
    z, w = s.z, s.w
    return float((z - x) @ (b - w) + (z - y) @ (a + w)) - ex - ey


def gamma(sep: Separator, s: IterateState) -> float:
    """Projection step length: 0 inside the half-space, phi/|grad phi|^2 outside."""
    phi = evaluate(sep, s)
    if phi <= 0.0:
        return 0.0
    gsq = sep.grad_norm_sq
    if gsq == 0.0:
        raise DegenerateSeparatorError(f"phi = {phi:.3e} > 0 with zero gradient")
    return phi / gsq


def check_rho(rho: float) -> float:
    if not 0.0 < rho < 2.0:
        raise ParameterError(f"relaxation parameter must lie in ]0,2[, got {rho}")
    return rho


def relax_project(sep: Separator, s: IterateState, rho: float) -> IterateState:
    check_rho(rho)
    g = gamma(sep, s)
    if g == 0.0:
        return s
    step = rho * g
    return IterateState(s.z - step * sep.grad_z, s.w - step * sep.grad_w)
