"""Bound certificates and checkers for the inequalities proved about projective splitting.

Every check is phrased as ``observed <= bound``; a check passes when
``observed <= bound + tol * max(|bound|, |observed|)`` (per-iteration lemmas)
or ``observed <= bound * (1 + tol)`` (rate bounds).
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .operators import MonotoneOperator, min_enlargement

LEMMA_SLACK = 1e-9
RATE_TOL = 1e-8
IDENTITY_TOL = 1e-8
SUBPROBLEM_TOL = 1e-12
DEFINITION_TOL = 1e-12
MEMBERSHIP_SLACK = 1e-8
GAMMA_HALF_ULPS = 4
# multiple of eps*scale used for forward-error floors of computed inner products
ROUNDING_FACTOR = 64.0
_EPS = float(np.finfo(float).eps)


class Variant(str, enum.Enum):
    EXACT_PSM = "psm"
    SCALED_PSM = "scaled-psm"
    SPINGARN = "spingarn"
    PARALLEL_INEXACT = "parallel-inexact"
    SEQUENTIAL_INEXACT = "sequential-inexact"

    @property
    def exact(self) -> bool:
        return self in (Variant.EXACT_PSM, Variant.SCALED_PSM, Variant.SPINGARN)


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class BoundCertificate:
    """Per-iteration constants; fields that do not apply to the variant are ``None``."""

    variant: Variant
    lam: float
    mu: float
    alpha: float
    theta: Optional[float] = None
    delta_param: Optional[float] = None
    xi: Optional[float] = None
    tau: Optional[float] = None
    rho: Optional[float] = None
    sigma: float = 0.0
    eta: float = 1.0


def psm_theta(lam: float, mu: float, alpha: float) -> float:
    """Smallest eigenvalue of [[1, -lam|alpha|/2], [-lam|alpha|/2, lam*mu]].

    Evaluated as det / larger-root to avoid cancellation in the textbook
    form 0.5*(tr - sqrt(tr^2 - 4 det)).
    """
    tr = 1.0 + lam * mu
    det = lam * mu - (lam * alpha / 2.0) ** 2
    disc = max(tr * tr - 4.0 * det, 0.0)
    return 2.0 * det / (tr + math.sqrt(disc))


def certificate(variant, *, lam: float, mu: Optional[float] = None, alpha: float = 0.0,
                rho: Optional[float] = None, sigma: float = 0.0, eta: float = 1.0) -> BoundCertificate:
    variant = Variant(variant)
    if not lam > 0:
        raise CertificateError(f"lam must be positive, got {lam}")
    if variant is Variant.SEQUENTIAL_INEXACT:
        if mu is not None and mu != lam:
            raise CertificateError("the sequential variant uses a single lam for both subproblems")
        return BoundCertificate(variant, lam, lam, 1.0, tau=min(lam, 1.0 / lam), rho=rho, sigma=sigma, eta=eta)
    if mu is None or not mu > 0:
        raise CertificateError(f"mu must be positive, got {mu}")
    if variant is Variant.PARALLEL_INEXACT:
        if alpha != 0.0:
            raise CertificateError("the parallel variant has alpha = 0")
        return BoundCertificate(variant, lam, mu, 0.0, xi=min(lam, 1.0 / lam, mu, 1.0 / mu),
                                rho=rho, sigma=sigma, eta=eta)
    if not mu / lam - (alpha / 2.0) ** 2 > 0:
        raise CertificateError(f"mu/lam - (alpha/2)^2 must be positive (lam={lam}, mu={mu}, alpha={alpha})")
    return BoundCertificate(variant, lam, mu, alpha, theta=psm_theta(lam, mu, alpha),
                            delta_param=mu + (1.0 - alpha) * lam, rho=rho, sigma=sigma, eta=eta)


def upsilon(lam_lo: float, lam_hi: float, nu: float) -> tuple[float, float]:
    """The constant upsilon of the bounded-parameter regime and the lower bound 1/upsilon on theta/delta."""
    if not (lam_hi >= lam_lo > 0 and nu > 0):
        raise CertificateError("need lam_hi >= lam_lo > 0 and nu > 0")
    u = 2.0 * lam_hi * (1.0 + lam_hi ** 2) * (1.0 + math.sqrt(lam_hi / lam_lo)) / (lam_lo ** 2 * nu)
    return u, 1.0 / u


def upsilon_prime(lam_lo: float, lam_hi: float, nu: float, rho_bar: float, k) -> float:
    u, _ = upsilon(lam_lo, lam_hi, nu)
    return lam_hi * (1.0 + lam_hi ** 2) * u / (lam_lo ** 2 * nu * (1.0 - rho_bar) ** 2 * np.asarray(k, float))


@dataclass(frozen=True)
class RunConstants:
    """Declared parameter bounds of a run (any field may be unknown)."""

    lam_lo: Optional[float] = None
    lam_hi: Optional[float] = None
    nu: Optional[float] = None
    rho_bar: Optional[float] = None

    @property
    def a123(self) -> bool:
        return None not in (self.lam_lo, self.lam_hi, self.nu, self.rho_bar)

    @property
    def a1(self) -> bool:
        return None not in (self.lam_lo, self.lam_hi, self.rho_bar)


# ---------------------------------------------------------------- per iteration

@dataclass(frozen=True)
class Check:
    name: str
    observed: float
    bound: float
    ok: bool
    informational: bool = False

    @property
    def slack(self) -> float:
        return self.bound - self.observed


def rounding_floor(record) -> float:
    """Forward-error bound for phi and the lemma quantities of one record.

    The stored triples satisfy their defining identities only up to about
    eps*scale, so every inner product built from them carries an absolute
    error of that order times the length of the other factor.
    """
    xt, yt = record.xtriple, record.ytriple
    z, w = record.state_before.z, record.state_before.w
    vs = (z, w, xt.point, xt.value, yt.point, yt.value)
    scale = max(1.0, *(float(np.max(np.abs(t))) for t in vs))
    lengths = sum(float(np.linalg.norm(t)) for t in (z - xt.point, xt.value - w, z - yt.point, yt.value + w))
    return ROUNDING_FACTOR * _EPS * scale * lengths


def _le(name: str, observed: float, bound: float, rel: float = LEMMA_SLACK, absolute: float = 0.0) -> Check:
    tol = rel * max(abs(bound), abs(observed)) + absolute
    return Check(name, float(observed), float(bound), bool(observed <= bound + tol))


@dataclass
class IterationReport:
    k: int
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks if not c.informational)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok and not c.informational]


def _sq(v) -> float:
    return float(v @ v)


def gamma_half_ulps(g: float) -> float:
    return float(abs(g - 0.5) / np.spacing(0.5))


def definition_terms(lam: float, center, point, value) -> tuple[float, float]:
    """``(|lam*value + point - center|^2, |lam*value|^2 + |point - center|^2)`` of the relative error criterion."""
    r = lam * value + point - center
    return _sq(r), _sq(lam * value) + _sq(point - center)


def check_iteration(record, d0: Optional[float] = None, *, ops: Optional[tuple] = None,
                    cumulative: Optional[float] = None, s0=None, slack: float = LEMMA_SLACK) -> IterationReport:
    """Evaluate every inequality that applies to one trace record.

    ``ops`` is ``(A, B)`` in the coordinates the run works in; when given
    and affine-reducible, triples are certified by ``min_enlargement``.
    ``cumulative`` is the running sum of rho(2-rho)gamma^2|grad phi|^2 up to
    this record and, together with ``s0`` and ``d0``, enables the distance
    estimates.
    """
    cert = record.certificate
    if cert is None:
        raise CertificateError(f"record {record.k} carries no certificate")
    rep = IterationReport(record.k)
    rho = record.rho
    rep.checks.append(Check("rho.in_range", rho, 2.0, bool(0.0 < rho < 2.0)))
    rep.checks.append(Check("gamma.nonnegative", -record.gamma, 0.0, bool(record.gamma >= 0.0)))

    xt, yt = record.xtriple, record.ytriple
    x, b, ex = xt.point, xt.value, xt.eps
    y, a, ey = yt.point, yt.value, yt.eps
    z, w = record.state_before.z, record.state_before.w
    phi, gsq = record.phi, record.grad_norm_sq
    lam, mu, alpha = cert.lam, cert.mu, cert.alpha
    v = Variant(cert.variant)
    dist_sq = _sq(z - y) + _sq(b - w)
    fl = rounding_floor(record)

    def scale(*vs):
        return max(1.0, *(float(np.max(np.abs(t))) if np.size(t) else 0.0 for t in vs))

    if v.exact or v is Variant.SEQUENTIAL_INEXACT:
        res = lam * b + x - z - lam * w
        rep.checks.append(_le("subproblem.x", float(np.linalg.norm(res)), 0.0, 0.0,
                              SUBPROBLEM_TOL * scale(z, x, lam * w, lam * b)))
    if v.exact:
        rhs = (1.0 - alpha) * z + alpha * x - mu * w
        res = mu * a + y - rhs
        rep.checks.append(_le("subproblem.y", float(np.linalg.norm(res)), 0.0, 0.0,
                              SUBPROBLEM_TOL * scale(z, x, y, mu * w, mu * a)))
        rep.checks.append(_le("lemma.theta_delta", cert.theta / cert.delta_param * gsq, phi, slack, fl))
        rep.checks.append(_le("lemma.theta_mu", cert.theta / mu * dist_sq, phi, slack, fl))
        if v is Variant.SPINGARN and gsq > 0:
            # exact in theory; in floating point the error grows like eps*|z|/|grad phi|
            ulps = gamma_half_ulps(record.gamma)
            rep.checks.append(Check("spingarn.gamma_half_ulps", ulps, GAMMA_HALF_ULPS,
                                    bool(ulps <= GAMMA_HALF_ULPS), informational=True))
    elif v is Variant.PARALLEL_INEXACT:
        s = cert.sigma
        rep.checks.append(_le("lemma.xi", (1.0 - s) / 4.0 * cert.xi * gsq, phi, slack, fl))
        c_eps, c_dist = s / (1.0 - s), 2.0 / ((1.0 - s) * cert.xi)
        rep.checks.append(_le("budget.eps", ex + ey, c_eps * max(phi, 0.0), slack, c_eps * fl))
        rep.checks.append(_le("budget.dist", dist_sq, c_dist * max(phi, 0.0), slack, c_dist * fl))
        lhs, rhs = definition_terms(lam, z, x, b - w)
        rep.checks.append(_le("definition.x", lhs + 2.0 * lam * ex, s * rhs, 0.0, DEFINITION_TOL * max(1.0, rhs)))
        lhs, rhs = definition_terms(mu, z, y, a + w)
        rep.checks.append(_le("definition.y", lhs + 2.0 * mu * ey, s * rhs, 0.0, DEFINITION_TOL * max(1.0, rhs)))
    elif v is Variant.SEQUENTIAL_INEXACT:
        s = cert.sigma
        rep.checks.append(Check("eps_x.zero", ex, 0.0, ex == 0.0))
        rep.checks.append(_le("lemma.tau", (1.0 - 2.0 * s) / 2.0 * cert.tau * gsq, phi, slack, fl))
        c_eps, c_dist = 2.0 * s / (1.0 - 2.0 * s), 8.0 / ((1.0 - 2.0 * s) * cert.tau)
        rep.checks.append(_le("budget.eps_y", ey, c_eps * max(phi, 0.0), slack, c_eps * fl))
        rep.checks.append(_le("budget.dist", dist_sq, c_dist * max(phi, 0.0), slack, c_dist * fl))
        lhs, rhs = definition_terms(lam, x, y, a + w)
        rep.checks.append(_le("definition.y", lhs + 2.0 * lam * ey, s * rhs, 0.0, DEFINITION_TOL * max(1.0, rhs)))

    if ops is not None:
        A, B = ops
        for name, op, t in (("member.x", B, xt), ("member.y", A, yt)):
            if op.as_affine() is not None:
                rep.checks.append(_le(name, min_enlargement(op, t.point, t.value), t.eps, 0.0, MEMBERSHIP_SLACK))

    if d0 is not None and cumulative is not None:
        rep.checks.append(_le("distance.sum", cumulative, d0 * d0, slack))
    if d0 is not None and s0 is not None:
        drift = math.sqrt(_sq(record.state_after.z - s0.z) + _sq(record.state_after.w - s0.w))
        rep.checks.append(_le("distance.drift", drift, 2.0 * d0, slack))
    return rep


def check_trace_iterations(trace, d0: Optional[float] = None, ops: Optional[tuple] = None,
                           slack: float = LEMMA_SLACK) -> list[IterationReport]:
    out = []
    cum = 0.0
    for rec in trace.records:
        cum += rec.rho * (2.0 - rec.rho) * rec.gamma ** 2 * rec.grad_norm_sq
        out.append(check_iteration(rec, d0, ops=ops, cumulative=cum, s0=trace.s0, slack=slack))
    return out


# ---------------------------------------------------------------- trace arrays

@dataclass(frozen=True, eq=False)
class TraceArrays:
    k: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray
    phi: np.ndarray
    gsq: np.ndarray
    res_ab: np.ndarray
    res_xy: np.ndarray
    eps_x: np.ndarray
    eps_y: np.ndarray
    grad: np.ndarray       # rows (a+b, x-y)
    offset: np.ndarray     # phi_j(p) = grad_j . p + offset_j
    states: np.ndarray     # rows s_k = (z_k, w_k), k = 0..K
    dist_yb: np.ndarray    # |(y_j, b_j) - (z_{j-1}, w_{j-1})|^2
    erg_ab: np.ndarray
    erg_xy: np.ndarray
    erg_eps: np.ndarray
    Gamma: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    tau: np.ndarray


def trace_arrays(trace) -> TraceArrays:
    recs = trace.records
    nan = float("nan")

    def col(f):
        return np.array([f(r) for r in recs], dtype=float)

    def cfield(name):
        return col(lambda r: nan if r.certificate is None or getattr(r.certificate, name) is None
                   else getattr(r.certificate, name))

    grad = np.array([np.concatenate([r.separator.grad_z, r.separator.grad_w]) for r in recs]).reshape(len(recs), -1)
    states = np.array([trace.s0.stacked()] + [r.state_after.stacked() for r in recs])
    erg = [r.ergodic for r in recs]
    erg_ab = np.array([nan if e is None else float(np.linalg.norm(e[0].value + e[1].value)) for e in erg])
    erg_xy = np.array([nan if e is None else float(np.linalg.norm(e[0].point - e[1].point)) for e in erg])
    erg_eps = np.array([nan if e is None else e[0].eps + e[1].eps for e in erg])
    Gamma = np.array([0.0 if e is None else e[2] for e in erg])
    return TraceArrays(
        k=col(lambda r: r.k), gamma=col(lambda r: r.gamma), rho=col(lambda r: r.rho),
        phi=col(lambda r: r.phi), gsq=col(lambda r: r.grad_norm_sq),
        res_ab=col(lambda r: np.linalg.norm(r.ytriple.value + r.xtriple.value)),
        res_xy=col(lambda r: np.linalg.norm(r.xtriple.point - r.ytriple.point)),
        eps_x=col(lambda r: r.xtriple.eps), eps_y=col(lambda r: r.ytriple.eps),
        grad=grad, offset=col(lambda r: r.separator.offset), states=states,
        dist_yb=col(lambda r: _sq(r.ytriple.point - r.state_before.z) + _sq(r.xtriple.value - r.state_before.w)),
        erg_ab=erg_ab, erg_xy=erg_xy, erg_eps=erg_eps, Gamma=Gamma,
        theta=cfield("theta"), delta=cfield("delta_param"), mu=cfield("mu"), xi=cfield("xi"), tau=cfield("tau"),
    )


# ---------------------------------------------------------------- run invariants

def sum_identity_errors(trace, probes: np.ndarray, arrays: Optional[TraceArrays] = None) -> np.ndarray:
    """Relative error of the sum identity, shape (K, n_probes).

    0.5|p - s_k|^2 + 0.5 sum rho(2-rho)gamma^2|grad|^2 = 0.5|p - s_0|^2 + sum rho gamma phi_j(p)
    """
    ta = arrays or trace_arrays(trace)
    P = np.atleast_2d(np.asarray(probes, float))
    wts = ta.rho * ta.gamma
    cum_sq = np.cumsum(ta.rho * (2.0 - ta.rho) * ta.gamma ** 2 * ta.gsq)
    phis = ta.grad @ P.T + ta.offset[:, None]
    terms = wts[:, None] * phis
    rhs = 0.5 * np.sum((P - ta.states[0]) ** 2, axis=1)[None, :] + np.cumsum(terms, axis=0)
    lhs = 0.5 * ((ta.states[1:, None, :] - P[None, :, :]) ** 2).sum(axis=2) + 0.5 * cum_sq[:, None]
    # the identity is a sum of signed terms; measure against the largest one
    mag = np.maximum.reduce([np.abs(lhs), np.abs(rhs), np.cumsum(np.abs(terms), axis=0),
                             np.full_like(lhs, 1e-300)])
    return np.abs(lhs - rhs) / mag


def fejer_violations(trace, points: np.ndarray, slack: float = 1e-12, arrays: Optional[TraceArrays] = None) -> int:
    """Number of steps where |s_k - p| grew by more than slack*max(1, |s_{k-1} - p|)."""
    ta = arrays or trace_arrays(trace)
    P = np.atleast_2d(np.asarray(points, float))
    d = np.sqrt(((ta.states[:, None, :] - P[None, :, :]) ** 2).sum(axis=2))
    grow = d[1:] - d[:-1]
    return int(np.sum(grow > slack * np.maximum(1.0, d[:-1])))


def telescoping_errors(trace, arrays: Optional[TraceArrays] = None) -> np.ndarray:
    """Relative error of abar+bbar = (z0-zk)/Gamma and xbar-ybar = (w0-wk)/Gamma per iteration."""
    ta = arrays or trace_arrays(trace)
    n = ta.states.shape[1] // 2
    out = np.zeros(len(trace.records))
    for i, r in enumerate(trace.records):
        if r.ergodic is None:
            continue
        ex, ey, G = r.ergodic
        dz = (ta.states[0, :n] - ta.states[i + 1, :n]) / G
        dw = (ta.states[0, n:] - ta.states[i + 1, n:]) / G
        e1 = np.linalg.norm(ex.value + ey.value - dz)
        e2 = np.linalg.norm(ex.point - ey.point - dw)
        sc = max(1.0, np.linalg.norm(ex.value), np.linalg.norm(ey.value), np.linalg.norm(ex.point),
                 np.linalg.norm(ey.point), np.linalg.norm(dz), np.linalg.norm(dw))
        out[i] = max(e1, e2) / sc
    return out


def direct_ergodic_eps(trace, k: int) -> tuple[float, float]:
    """epsbar recomputed from the stored triples as (1/Gamma) sum rho gamma (eps_j + <x_j - xbar, b_j>)."""
    recs = [r for r in trace.records[:k] if r.gamma > 0]
    wt = np.array([r.rho * r.gamma for r in recs])
    G = wt.sum()
    X = np.array([r.xtriple.point for r in recs]); Bv = np.array([r.xtriple.value for r in recs])
    Y = np.array([r.ytriple.point for r in recs]); Av = np.array([r.ytriple.value for r in recs])
    ex = np.array([r.xtriple.eps for r in recs]); ey = np.array([r.ytriple.eps for r in recs])
    xbar, ybar = wt @ X / G, wt @ Y / G
    epx = float(wt @ (ex + np.einsum("ij,ij->i", X - xbar, Bv)) / G)
    epy = float(wt @ (ey + np.einsum("ij,ij->i", Y - ybar, Av)) / G)
    return epx, epy


# ---------------------------------------------------------------- rate reports

@dataclass
class TheoremCheck:
    theorem: str
    k: np.ndarray
    bound: np.ndarray
    observed: np.ndarray
    tol: float = RATE_TOL

    @property
    def passed(self) -> np.ndarray:
        return self.observed <= self.bound * (1.0 + self.tol)

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def max_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.bound > 0, self.observed / self.bound, np.where(self.observed > 0, np.inf, 0.0))
        return float(np.max(r)) if r.size else 0.0

    def records(self) -> list[dict]:
        ok = self.passed
        return [{"theorem": self.theorem, "k": int(k), "bound": float(b), "observed": float(o),
                 "satisfied": bool(s), "slack": float(b - o)}
                for k, b, o, s in zip(self.k, self.bound, self.observed, ok)]


@dataclass
class RateReport:
    variant: Optional[str]
    checks: list[TheoremCheck] = field(default_factory=list)
    skipped: Optional[str] = None
    info: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def get(self, theorem: str) -> TheoremCheck:
        for c in self.checks:
            if c.theorem == theorem:
                return c
        raise KeyError(theorem)

    def summary(self) -> list[dict]:
        return [{"theorem": c.theorem, "satisfied": c.satisfied, "max_ratio": c.max_ratio, "checked": int(c.k.size)}
                for c in self.checks]

    def to_json(self, every: int = 1) -> str:
        recs = []
        for c in self.checks:
            rs = c.records()
            keep = set(range(0, len(rs), every)) | {len(rs) - 1} | {i for i, r in enumerate(rs) if not r["satisfied"]}
            recs.extend(rs[i] for i in sorted(keep) if 0 <= i < len(rs))
        return json.dumps({"variant": self.variant, "skipped": self.skipped, "info": self.info,
                           "summary": self.summary(), "records": recs}, indent=1, allow_nan=True)


def _loglog_slope(k: np.ndarray, v: np.ndarray) -> Optional[float]:
    m = (v > 0) & np.isfinite(v)
    if m.sum() < 10:
        return None
    lk, lv = np.log(k[m]), np.log(v[m])
    half = lk >= lk[0] + 0.5 * (lk[-1] - lk[0])
    if half.sum() < 5:
        return None
    return float(np.polyfit(lk[half], lv[half], 1)[0])


def _scaled_psi(main: np.ndarray, eps: np.ndarray, main_c: float, eps_c: float, sigma: float) -> np.ndarray:
    # psi_j = max(main_c*main_j, eps_c*eps_j) with eps_c = c/sigma; sigma = 0 forces eps = 0
    if sigma > 0:
        second = eps_c / sigma * eps
    else:
        second = np.where(eps > 0, np.inf, 0.0)
    return np.maximum(main_c * main, second)


def noise_floor_index(trace) -> int:
    """Index of the first record at the floating-point floor, or ``len(trace)``.

    In exact arithmetic phi_k > 0 whenever grad phi_k != 0; a record whose
    phi is within the forward-error floor no longer resolves that sign.
    """
    for i, r in enumerate(trace.records):
        if r.grad_norm_sq > 0 and r.phi <= rounding_floor(r):
            return i
    return len(trace.records)


def check_rates(trace, d0: float, mode: str = "auto", constants: Optional[RunConstants] = None,
                tol: float = RATE_TOL) -> RateReport:
    """Compare a trace against the explicit bounds of the convergence theorems.

    ``mode`` is ``"general"`` (bounds valid for any admissible parameters),
    ``"a123"`` (adds the bounded-parameter bounds, needs ``constants``) or
    ``"auto"`` (``"a123"`` when the constants allow it).
    """
    recs = trace.records
    variant = None
    if recs and recs[0].certificate is not None:
        variant = Variant(recs[0].certificate.variant)
    report = RateReport(variant.value if variant else None)
    from .engine import Trace

    if trace.termination is not None and trace.termination.kind == "exact" and recs:
        # the final record has grad phi = 0; the theorems describe the iterations before it
        report.info["exact_k"] = recs[-1].k
        trace = Trace(trace.s0, recs[:-1], trace.termination, trace.first_stop)
        recs = trace.records
    if not recs:
        report.skipped = "empty trace"
        return report
    if variant is None:
        raise CertificateError("trace records carry no certificate")
    constants = constants or RunConstants()
    if mode == "auto":
        mode = "a123" if (constants.a123 or (not variant.exact and constants.a1)) else "general"
    if mode not in ("general", "a123"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "a123" and not (constants.a123 or (not variant.exact and constants.a1)):
        raise ValueError("a123 mode needs lam_lo, lam_hi, rho_bar (and nu for exact variants)")

    kf = noise_floor_index(trace)
    if kf < len(recs):
        # past this point rounding, not the algorithm, drives gamma and phi
        report.info["noise_floor_k"] = recs[kf].k
        trace = Trace(trace.s0, recs[:kf], trace.termination, trace.first_stop)
        recs = trace.records
        if not recs:
            report.skipped = "the first iteration is already at the rounding floor"
            return report
    ta = trace_arrays(trace)
    k = ta.k
    K = len(recs)
    rho_bar = constants.rho_bar if constants.rho_bar is not None else float(np.max(np.abs(1.0 - ta.rho)))
    sigma = recs[0].certificate.sigma
    eta = recs[0].certificate.eta
    add = report.checks.append
    report.info.update({"d0": d0, "rho_bar": rho_bar, "mode": mode, "iterations": K})

    # framework: distance estimates and ergodic bounds of any separator sequence
    cum_sq = np.cumsum(ta.rho * (2.0 - ta.rho) * ta.gamma ** 2 * ta.gsq)
    add(TheoremCheck("distance.sum", k, np.full(K, d0 * d0), cum_sq, tol))
    drift = np.sqrt(((ta.states[1:] - ta.states[0]) ** 2).sum(axis=1))
    add(TheoremCheck("distance.drift", k, np.full(K, 2.0 * d0), drift, tol))
    has = ta.Gamma > 0
    kG, G = k[has], ta.Gamma[has]
    add(TheoremCheck("ergodic.ab", kG, 2.0 * d0 / G, ta.erg_ab[has], tol))
    add(TheoremCheck("ergodic.xy", kG, 2.0 * d0 / G, ta.erg_xy[has], tol))
    weighted = np.cumsum(ta.rho * ta.gamma * ta.dist_yb)[has]
    add(TheoremCheck("ergodic.eps", kG, (weighted / G + 4.0 * d0 * d0) / G, ta.erg_eps[has], tol))

    min_gsq = np.minimum.accumulate(ta.gsq)

    if variant.exact:
        td = ta.theta / ta.delta
        denom = np.cumsum(ta.rho * (2.0 - ta.rho) * td ** 2)
        add(TheoremCheck("psm.pointwise", k, d0 * d0 / denom, min_gsq, tol))
        vs = np.maximum.accumulate(ta.mu / (ta.theta * (2.0 - ta.rho)))
        with np.errstate(divide="ignore"):
            vsig = vs[has] / G
        add(TheoremCheck("psm.ergodic.eps", kG, d0 * d0 * (vsig + 4.0) / G, ta.erg_eps[has], tol))
        if mode == "a123":
            c = constants
            ups, inv_ups = upsilon(c.lam_lo, c.lam_hi, c.nu)
            report.info["upsilon"] = ups
            sq = np.sqrt(k)
            add(TheoremCheck("psm.a123.theta_delta", k, td, np.full(K, inv_ups), tol))
            add(TheoremCheck("psm.a123.pointwise", k, d0 * ups / (sq * (1.0 - rho_bar)),
                             np.sqrt(min_gsq), tol))
            add(TheoremCheck("psm.a123.Gamma", kG, G, (1.0 - rho_bar) * kG / ups, tol))
            add(TheoremCheck("psm.a123.ergodic.ab", kG, 2.0 * d0 * ups / (kG * (1.0 - rho_bar)), ta.erg_ab[has], tol))
            add(TheoremCheck("psm.a123.ergodic.xy", kG, 2.0 * d0 * ups / (kG * (1.0 - rho_bar)), ta.erg_xy[has], tol))
            up = upsilon_prime(c.lam_lo, c.lam_hi, c.nu, rho_bar, kG)
            add(TheoremCheck("psm.a123.ergodic.eps", kG, d0 * d0 * ups * (up + 4.0) / (kG * (1.0 - rho_bar)),
                             ta.erg_eps[has], tol))
        if variant is Variant.SPINGARN:
            _spingarn_checks(trace, ta, d0, rho_bar, add, tol)
    elif variant is Variant.PARALLEL_INEXACT:
        c1 = ((1.0 - sigma) / 4.0) ** 2
        psi = _scaled_psi(ta.xi * ta.gsq, ta.eps_x + ta.eps_y, c1, (1.0 - sigma) ** 2 / 4.0, sigma)
        add(TheoremCheck("parallel.pointwise", k, d0 * d0 / ((1.0 - rho_bar) ** 2 * np.cumsum(ta.xi)),
                         np.minimum.accumulate(psi), tol))
        vphi = (2.0 / (1.0 - sigma)) * np.maximum.accumulate(1.0 / (ta.xi * (2.0 - ta.rho)))[has] / G
        add(TheoremCheck("parallel.ergodic.eps", kG, d0 * d0 * (vphi + 4.0) / G, ta.erg_eps[has], tol))
        if mode == "a123":
            xi = min(constants.lam_lo, 1.0 / constants.lam_hi)
            add(TheoremCheck("parallel.a1.Gamma", kG, G, kG * (1.0 - rho_bar) * xi * (1.0 - sigma) / 4.0, tol))
            add(TheoremCheck("parallel.a1.varphi", kG,
                             np.full(kG.size, 8.0 / ((1.0 - rho_bar) ** 2 * (1.0 - sigma) ** 2 * xi ** 2)), vphi, tol))
    elif variant is Variant.SEQUENTIAL_INEXACT:
        c1 = (1.0 - 2.0 * sigma) ** 2 / 4.0
        psi = _scaled_psi(ta.tau * ta.gsq, ta.eps_y, c1, c1, sigma)
        add(TheoremCheck("sequential.pointwise", k, d0 * d0 / ((1.0 - rho_bar) ** 2 * np.cumsum(ta.tau)),
                         np.minimum.accumulate(psi), tol))
        vth = np.maximum.accumulate(8.0 / (ta.tau * (1.0 - 2.0 * sigma) * (2.0 - ta.rho)))[has] / G
        add(TheoremCheck("sequential.ergodic.eps", kG, d0 * d0 * (vth + 4.0) / G, ta.erg_eps[has], tol))
        if mode == "a123":
            tau = min(constants.lam_lo, 1.0 / constants.lam_hi)
            add(TheoremCheck("sequential.a1.Gamma", kG, G, kG * (1.0 - rho_bar) * tau * (1.0 - 2.0 * sigma) / 2.0, tol))

    report.info["slope_pointwise"] = _loglog_slope(k, np.sqrt(min_gsq))
    report.info["slope_ergodic"] = _loglog_slope(kG, np.maximum(ta.erg_ab[has], ta.erg_xy[has]))
    report.info["eta"] = eta
    return report


def _spingarn_checks(trace, ta: TraceArrays, d0: float, rho_bar: float, add, tol: float) -> None:
    """Spingarn bounds in scaled quantities, with rho_j-weighted ergodic means (weights sum to P_k)."""
    from . import ergodic

    k = ta.k
    K = k.size
    pw = np.minimum.accumulate(np.maximum(ta.res_ab, ta.res_xy))
    add(TheoremCheck("spingarn.pointwise", k, 2.0 * d0 / (np.sqrt(k) * (1.0 - rho_bar)), pw, tol))
    acc = ergodic.ErgodicAccumulator.empty(trace.s0.dim)
    ab = np.empty(K); xy = np.empty(K); ep = np.empty(K); P = np.empty(K)
    for i, r in enumerate(trace.records):
        acc = ergodic.update(acc, r.xtriple, r.ytriple, r.rho, 1.0)
        ex, ey, Pk = ergodic.snapshot(acc)
        ab[i] = np.linalg.norm(ex.value + ey.value)
        xy[i] = np.linalg.norm(ex.point - ey.point)
        ep[i] = ex.eps + ey.eps
        P[i] = Pk
    add(TheoremCheck("spingarn.P_lower", k, P, k * (1.0 - rho_bar), tol))
    add(TheoremCheck("spingarn.ergodic.ab", k, 4.0 * d0 / (k * (1.0 - rho_bar)), ab, tol))
    add(TheoremCheck("spingarn.ergodic.xy", k, 4.0 * d0 / (k * (1.0 - rho_bar)), xy, tol))
    add(TheoremCheck("spingarn.ergodic.eps", k,
                     2.0 * d0 * d0 / (k * (1.0 - rho_bar)) * (2.0 / (1.0 - rho_bar) ** 2 + 4.0), ep, tol))


# ---------------------------------------------------------------- (delta, eps) counts

def pointwise_count_bound(d0: float, ups: float, rho_bar: float, delta: float) -> int:
    """Iterations after which some iterate is a (delta, 0)-solution, bounded-parameter PSM."""
    return int(math.ceil(d0 * d0 * ups * ups / ((1.0 - rho_bar) ** 2 * delta * delta)))


def ergodic_count_bound(d0: float, lam_lo: float, lam_hi: float, nu: float, rho_bar: float,
                        delta: float, eps: float) -> int:
    """Iteration from which every ergodic iterate is a (delta, eps)-solution, bounded-parameter PSM."""
    ups, _ = upsilon(lam_lo, lam_hi, nu)
    k_res = 2.0 * d0 * ups / ((1.0 - rho_bar) * delta)
    C = float(upsilon_prime(lam_lo, lam_hi, nu, rho_bar, 1.0))  # upsilon'_k = C / k
    # eps k^2 - (4 d0^2 ups / (1-rho_bar)) k - d0^2 ups C / (1-rho_bar) >= 0
    p = 4.0 * d0 * d0 * ups / (1.0 - rho_bar)
    q = d0 * d0 * ups * C / (1.0 - rho_bar)
    k_eps = (p + math.sqrt(p * p + 4.0 * eps * q)) / (2.0 * eps)
    return int(math.ceil(max(k_res, k_eps)))


# ---------------------------------------------------------------- distances

def distance_to_solution(problem, state) -> float:
    """Distance of ``state`` to the problem's declared extended solution set."""
    sols = getattr(problem, "solutions", None)
    if sols is None:
        raise CertificateError(f"problem {getattr(problem, 'name', '?')} declares no solution set")
    return float(sols.distance(state.stacked()))


def certificate_dict(cert: BoundCertificate) -> dict:
    d = asdict(cert)
    d["variant"] = Variant(cert.variant).value
    return d
