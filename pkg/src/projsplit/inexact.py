"""Relative-error (sigma-approximate) resolvents and the two inexact PSM variants.

An approximate solution of ``0 in lam*T(z') + z' - z`` is a triple
``(z', w, eps)`` with ``w in T^eps(z')`` and

    |lam*w + z' - z|^2 + 2*lam*eps <= sigma * (|lam*w|^2 + |z' - z|^2).

Here such triples are manufactured by solving exactly and then moving the
point along a fixed unit direction as far as a fraction ``stress`` of the
error budget allows, which gives reproducible worst-case-style inexactness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import Variant, certificate, definition_terms
from .operators import (MEMBERSHIP_TOL, EnlargementTriple, MonotoneOperator, OperatorError, as_vector,
                        min_enlargement)
from .separator import IterateState, ParameterError, build_separator
from .splitting import PsmSchedule

PARALLEL = "parallel"
SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class SigmaCriterion:
    sigma: float
    variant: str = PARALLEL

    def __post_init__(self):
        upper = {PARALLEL: 1.0, SEQUENTIAL: 0.5}.get(self.variant)
        if upper is None:
            raise ParameterError(f"unknown inexact variant {self.variant!r}")
        if not 0.0 <= self.sigma < upper:
            raise ParameterError(f"sigma must lie in [0, {upper}[ for the {self.variant} variant, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class ApproxResolventResult:
    triple: EnlargementTriple
    residual: np.ndarray


def _check_stress(stress: float) -> float:
    if not 0.0 <= stress <= 1.0:
        raise ParameterError(f"stress must lie in [0, 1], got {stress}")
    return stress


def unit_direction(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal(n)
    nrm = np.linalg.norm(d)
    return d / nrm if nrm > 0 else np.eye(n)[0]


def criterion_gap(op: MonotoneOperator, lam: float, z: np.ndarray, sigma: float,
                  point: np.ndarray, value: np.ndarray, shift: Optional[np.ndarray] = None) -> float:
    """``sigma*(...) - (|r|^2 + 2 lam eps_min)`` for the operator ``op + shift``; >= 0 means admissible."""
    base_value = value if shift is None else value - shift
    eps = min_enlargement(op, point, base_value)
    r2, budget = definition_terms(lam, z, point, value)
    return sigma * budget - (r2 + 2.0 * lam * eps)


def sigma_approx_resolvent(op: MonotoneOperator, lam: float, z, sigma: float, stress: float,
                           shift=None, direction: Optional[np.ndarray] = None,
                           sigma_max: float = 1.0) -> ApproxResolventResult:
    """A certified sigma-approximate solution for the operator ``op + shift`` at ``z``.

    ``stress = 0`` or ``sigma = 0`` returns the exact resolvent with eps = 0
    and r = 0.  Otherwise the exact point is moved by ``t*direction`` with t
    the largest step whose error uses at most ``stress`` of the budget.
    """
    if not lam > 0:
        raise ParameterError(f"lam must be positive, got {lam}")
    if not 0.0 <= sigma < sigma_max:
        raise ParameterError(f"sigma must lie in [0, {sigma_max}[, got {sigma}")
    _check_stress(stress)
    z = op._check(z)
    sh = np.zeros_like(z) if shift is None else as_vector(shift)
    zs = op.resolvent_point(lam, z - lam * sh)
    ws = (z - zs) / lam
    exact = ApproxResolventResult(EnlargementTriple(zs, ws, 0.0), np.zeros_like(z))
    if sigma == 0.0 or stress == 0.0:
        return exact
    aff = op.as_affine()
    if aff is None:
        raise OperatorError(f"stress > 0 needs min_enlargement, unsupported for {type(op).__name__}")
    if direction is None:
        direction = unit_direction(z.shape[0], np.random.default_rng(0))
    d = as_vector(direction)
    dmax = float(np.abs(d).max()) if d.size else 0.0
    if not (dmax > 0 and math.isfinite(dmax)):
        raise ParameterError("direction must be a nonzero finite vector")
    d = d / dmax  # tiny entries would underflow in the norm
    d = d / np.linalg.norm(d)

    # eps(t) = (r0 - t Md)' M^+ (r0 - t Md) / 4 with r0 the rounding residual of the exact pair
    M = aff.M
    r0 = (ws - sh) - (M @ zs + aff.q)
    Md = M @ d
    rhs = np.column_stack([r0, Md])
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.linalg.norm(M @ sol - rhs) > 1e-10 * max(1.0, float(np.abs(rhs).max())):
        return exact
    e0, e1, e2 = 0.25 * float(r0 @ sol[:, 0]), -0.5 * float(r0 @ sol[:, 1]), 0.25 * float(Md @ sol[:, 1])
    dz = zs - z
    c0 = _sq_norm(lam * ws) + _sq_norm(dz)
    c1 = float(d @ dz)
    sb = stress * sigma
    # |r|^2 + 2 lam eps(t) <= sb * (c0 + 2 t c1 + t^2) as a quadratic in t
    qa = 1.0 + 2.0 * lam * e2 - sb
    qb = 2.0 * lam * e1 - 2.0 * sb * c1
    qc = 2.0 * lam * max(e0, 0.0) - sb * c0
    if qc >= 0.0 or qa <= 0.0:
        return exact
    t = (-qb + math.sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa)

    # rounding can put the root just outside; back off until the exact criterion holds
    shrink = 1e-12
    for _ in range(24):
        zp = zs + t * d
        eps = min_enlargement(op, zp, ws - sh)
        r = lam * ws + zp - z
        r2, budget = definition_terms(lam, z, zp, ws)
        if math.isfinite(eps) and r2 + 2.0 * lam * eps <= sigma * budget:
            return ApproxResolventResult(EnlargementTriple(zp, ws, eps), r)
        t *= 1.0 - shrink
        shrink = min(4.0 * shrink, 0.5)
    return exact


def _sq_norm(v) -> float:
    return float(v @ v)


def validate_approx(op: MonotoneOperator, lam: float, z, sigma: float, result: ApproxResolventResult,
                    shift=None, slack: float = 0.0) -> bool:
    """Independent recheck of the relative error criterion and of the enlargement membership.

    ``slack`` loosens the criterion only; membership is certified at ``MEMBERSHIP_TOL``.
    """
    z = as_vector(z)
    t = result.triple
    r = lam * t.value + t.point - z
    if np.linalg.norm(r - result.residual) > 1e-12 * max(1.0, np.linalg.norm(r)) and np.any(result.residual):
        return False
    base_value = t.value if shift is None else t.value - as_vector(shift)
    if op.as_affine() is not None:
        if min_enlargement(op, t.point, base_value) > t.eps + max(slack, MEMBERSHIP_TOL):
            return False
    elif t.eps == 0.0:
        lo_hi = op.value_box(t.point)
        if lo_hi is None or np.any(base_value < lo_hi[0] - 1e-12) or np.any(base_value > lo_hi[1] + 1e-12):
            return False
    r2, budget = definition_terms(lam, z, t.point, t.value)
    if not np.any(result.residual):
        r2 = 0.0
    return r2 + 2.0 * lam * t.eps <= sigma * budget + slack * max(1.0, budget)


def _side_stress(op: MonotoneOperator, stress: float) -> float:
    # perturbed triples need an exact minimal enlargement; other kinds are solved exactly
    return stress if op.as_affine() is not None else 0.0


def _directions(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return unit_direction(n, rng), unit_direction(n, rng)


def parallel_inexact_oracle(A: MonotoneOperator, B: MonotoneOperator, schedule: PsmSchedule,
                            sigma: float, stress: float, seed: int = 0):
    """Both subproblems solved sigma-approximately from ``z_{k-1}`` (alpha = 0)."""
    SigmaCriterion(sigma, PARALLEL)
    _check_stress(stress)
    dB, dA = _directions(A.dim, seed)
    stress_B, stress_A = _side_stress(B, stress), _side_stress(A, stress)

    def oracle(k: int, s: IterateState):
        p = schedule(k)
        z, w = s.z, s.w
        rx = sigma_approx_resolvent(B, p.lam, z, sigma, stress_B, shift=-w, direction=dB)
        ry = sigma_approx_resolvent(A, p.mu, z, sigma, stress_A, shift=w, direction=dA)
        xt = EnlargementTriple(rx.triple.point, rx.triple.value + w, rx.triple.eps)
        yt = EnlargementTriple(ry.triple.point, ry.triple.value - w, ry.triple.eps)
        cert = certificate(Variant.PARALLEL_INEXACT, lam=p.lam, mu=p.mu, sigma=sigma)
        return build_separator(xt, yt), cert

    oracle.variant = Variant.PARALLEL_INEXACT
    oracle.schedule = schedule
    oracle.eta = 1.0
    oracle.stops_when_flat = True
    return oracle


def sequential_inexact_oracle(A: MonotoneOperator, B: MonotoneOperator, schedule: PsmSchedule,
                              sigma: float, stress: float, seed: int = 0):
    """Exact B-subproblem, then a sigma-approximate A-subproblem centred at ``x_k`` (alpha = 1)."""
    SigmaCriterion(sigma, SEQUENTIAL)
    _check_stress(stress)
    _, dA = _directions(A.dim, seed)
    stress_A = _side_stress(A, stress)

    def oracle(k: int, s: IterateState):
        lam = schedule(k).lam
        z, w = s.z, s.w
        u = z + lam * w
        x = B.resolvent_point(lam, u)
        b = (u - x) / lam
        ry = sigma_approx_resolvent(A, lam, x, sigma, stress_A, shift=w, direction=dA, sigma_max=0.5)
        xt = EnlargementTriple(x, b, 0.0)
        yt = EnlargementTriple(ry.triple.point, ry.triple.value - w, ry.triple.eps)
        cert = certificate(Variant.SEQUENTIAL_INEXACT, lam=lam, sigma=sigma)
        return build_separator(xt, yt), cert

    oracle.variant = Variant.SEQUENTIAL_INEXACT
    oracle.schedule = schedule
    oracle.eta = 1.0
    oracle.stops_when_flat = True
    return oracle
