"""Exact separator oracles: projective splitting (PSM), its eta-scaled form, Spingarn.

Scaled oracles work in the coordinates of the problem for ``eta*A`` and
``eta*B``: the iterate is ``(z, eta*w)`` and the triples carry ``eta*b`` and
``eta*a``.  With ``eta = 1`` these coincide with the plain PSM.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analysis import BoundCertificate, Variant, certificate
from .engine import RhoSchedule, as_rho_schedule
from .operators import EnlargementTriple, MonotoneOperator, resolvent
from .separator import IterateState, ParameterError, build_separator, check_rho

CONDITION_SLACK = 1e-14


@dataclass(frozen=True)
class PsmParams:
    lam: float
    mu: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ParameterError(f"lam and mu must be positive, got lam={self.lam}, mu={self.mu}")
        if not self.margin > CONDITION_SLACK:
            raise ParameterError(
                f"mu/lam - (alpha/2)^2 must be > 0 (lam={self.lam}, mu={self.mu}, alpha={self.alpha})")

    @property
    def margin(self) -> float:
        return self.mu / self.lam - (self.alpha / 2.0) ** 2


@dataclass(frozen=True)
class PsmSchedule:
    """Per-iteration PSM parameters.

    When ``lam_lo``, ``lam_hi`` and ``nu`` are all set the schedule declares
    the bounded-parameter regime and every generated triple of parameters is
    checked against it.
    """

    params: Callable[[int], PsmParams]
    lam_lo: Optional[float] = None
    lam_hi: Optional[float] = None
    nu: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if self.bounded:
            if not 0 < self.lam_lo <= self.lam_hi:
                raise ParameterError("need 0 < lam_lo <= lam_hi")
            if not self.nu > 0:
                raise ParameterError("nu must be positive")

    @property
    def bounded(self) -> bool:
        return None not in (self.lam_lo, self.lam_hi, self.nu)

    def __call__(self, k: int) -> PsmParams:
        p = self.params(k)
        if self.bounded:
            tol = 1e-12 * self.lam_hi
            if not (self.lam_lo - tol <= p.lam <= self.lam_hi + tol and self.lam_lo - tol <= p.mu <= self.lam_hi + tol):
                raise ParameterError(f"iteration {k}: lam/mu outside [{self.lam_lo}, {self.lam_hi}]")
            if p.margin < self.nu * (1 - 1e-12):
                raise ParameterError(f"iteration {k}: mu/lam - (alpha/2)^2 = {p.margin} < nu = {self.nu}")
        return p


def constant_schedule(lam: float = 1.0, mu: float = 1.0, alpha: float = 0.0) -> PsmSchedule:
    p = PsmParams(lam, mu, alpha)
    return PsmSchedule(lambda k: p, min(lam, mu), max(lam, mu), p.margin, "constant")


def band_a123(lam_lo: float, lam_hi: float, alpha_max: float = 0.0) -> PsmSchedule:
    """Deterministically varying lam_k, mu_k in [lam_lo, lam_hi] and |alpha_k| <= alpha_max."""
    nu = lam_lo / lam_hi - alpha_max ** 2 / 4.0
    if not nu > 0:
        raise ParameterError(f"band-a123 needs lam_lo/lam_hi - alpha_max^2/4 > 0, got {nu}")
    span = lam_hi - lam_lo

    def params(k):
        lam = lam_lo + span * 0.5 * (1.0 + math.sin(1.3 * k))
        mu = lam_lo + span * 0.5 * (1.0 + math.cos(0.7 * k))
        return PsmParams(min(max(lam, lam_lo), lam_hi), min(max(mu, lam_lo), lam_hi),
                         alpha_max * math.sin(0.9 * k))

    return PsmSchedule(params, lam_lo, lam_hi, nu, "band-a123")


def spingarn_schedule() -> PsmSchedule:
    p = PsmParams(1.0, 1.0, 0.0)
    return PsmSchedule(lambda k: p, 1.0, 1.0, 1.0, "spingarn")


def psm_oracle(A: MonotoneOperator, B: MonotoneOperator, schedule: PsmSchedule):
    """Separator oracle solving both PSM proximal subproblems exactly."""
    return scaled_psm_oracle(A, B, schedule, 1.0, variant=Variant.EXACT_PSM)


def scaled_psm_oracle(A: MonotoneOperator, B: MonotoneOperator, schedule: PsmSchedule, eta: float,
                      variant: Variant = Variant.SCALED_PSM):
    """PSM applied to ``eta*A``, ``eta*B``; the oracle sees the state ``(z, eta*w)``.

    lam*eta*b + x = z + lam*eta*w and mu*eta*a + y = (1-alpha) z + alpha x - mu*eta*w,
    which is one resolvent of B with parameter lam*eta and one of A with mu*eta.
    """
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    if A.dim != B.dim:
        raise ValueError("A and B differ in dimension")

    def oracle(k: int, s: IterateState):
        p = schedule(k)
        z, ws = s.z, s.w
        ux = z + p.lam * ws
        x, _ = resolvent(B, p.lam * eta, ux)
        bs = (ux - x) / p.lam
        uy = (1.0 - p.alpha) * z + p.alpha * x - p.mu * ws if p.alpha != 0.0 else z - p.mu * ws
        y, _ = resolvent(A, p.mu * eta, uy)
        as_ = (uy - y) / p.mu
        sep = build_separator(EnlargementTriple(x, bs, 0.0), EnlargementTriple(y, as_, 0.0))
        return sep, certificate(variant, lam=p.lam, mu=p.mu, alpha=p.alpha, eta=eta)

    oracle.variant = variant
    oracle.schedule = schedule
    oracle.eta = eta
    oracle.stops_when_flat = True
    return oracle


def explicit_gamma(z, w, x, b, y, a, eta: float = 1.0) -> float:
    """The PSM step length written out in unscaled quantities."""
    num = float((z - x) @ (b - w) + (z - y) @ (a + w))
    den = eta * float((a + b) @ (a + b)) + float((x - y) @ (x - y)) / eta
    return num / den


def spingarn_oracle(A: MonotoneOperator, B: MonotoneOperator, eta: float = 1.0):
    """Spingarn's two-operator method as the scaled PSM with lam = mu = 1, alpha = 0."""
    return scaled_psm_oracle(A, B, spingarn_schedule(), eta, variant=Variant.SPINGARN)


@dataclass(frozen=True, eq=False)
class SpingarnStep:
    x: np.ndarray
    b: np.ndarray
    y: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray


def spingarn_direct(A: MonotoneOperator, B: MonotoneOperator, eta: float, rho_schedule,
                    z0, w0, n_iter: int) -> list[SpingarnStep]:
    """Literal partial-inverse recursions in unscaled variables.

    eta*b + x = z + eta*w,  eta*a + y = z - eta*w,
    z+ = (1-rho) z + rho/2 (x + y),  w+ = (1-rho) w + rho/2 (b - a).
    """
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    rho_schedule = as_rho_schedule(rho_schedule)
    z = np.asarray(z0, dtype=float).copy()
    w = np.asarray(w0, dtype=float).copy()
    out = []
    for k in range(1, n_iter + 1):
        rho = check_rho(rho_schedule(k))
        x, b = resolvent(B, eta, z + eta * w)
        y, a = resolvent(A, eta, z - eta * w)
        z = (1.0 - rho) * z + 0.5 * rho * (x + y)
        w = (1.0 - rho) * w + 0.5 * rho * (b - a)
        out.append(SpingarnStep(x, b, y, a, z, w))
    return out


def to_scaled(s: IterateState, eta: float) -> IterateState:
    return IterateState(s.z, eta * s.w)


def from_scaled(s: IterateState, eta: float) -> IterateState:
    return IterateState(s.z, s.w / eta)
