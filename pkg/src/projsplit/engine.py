"""Generic relaxed-projection loop driven by a separator oracle."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import ergodic
from .operators import EnlargementTriple
from .separator import DegenerateSeparatorError, IterateState, Separator, check_rho, evaluate

# (k, state) -> (separator, certificate)
SeparatorOracle = Callable[[int, IterateState], tuple]

POINTWISE = "pointwise"
ERGODIC = "ergodic"


@dataclass(frozen=True)
class StopCriterion:
    delta: float
    eps: float

    def __post_init__(self):
        if self.delta < 0 or self.eps < 0:
            raise ValueError("stop tolerances must be nonnegative")


def residuals(xt: EnlargementTriple, yt: EnlargementTriple) -> tuple[float, float]:
    return (float(np.linalg.norm(yt.value + xt.value)),
            float(np.linalg.norm(xt.point - yt.point)))


def check_stop(xt: EnlargementTriple, yt: EnlargementTriple, c: StopCriterion) -> bool:
    if xt.dim != yt.dim:
        raise ValueError("triples differ in dimension")
    r_ab, r_xy = residuals(xt, yt)
    return max(r_ab, r_xy) <= c.delta and max(xt.eps, yt.eps) <= c.eps


@dataclass(frozen=True)
class RhoSchedule:
    """Relaxation parameters rho_k; ``rho_bar`` is set when every rho_k lies in [1-rho_bar, 1+rho_bar]."""

    values: Callable[[int], float]
    rho_bar: Optional[float] = None
    name: str = "custom"

    def __call__(self, k: int) -> float:
        return self.values(k)


def constant_rho(rho: float) -> RhoSchedule:
    check_rho(rho)
    return RhoSchedule(lambda k: rho, abs(1.0 - rho), f"constant({rho!r})")


def band_rho(rho_bar: float) -> RhoSchedule:
    """Deterministic rho_k = 1 + rho_bar*sin(k), inside the bounded relaxation band."""
    if not 0.0 <= rho_bar < 1.0:
        raise ValueError(f"rho_bar must lie in [0,1[, got {rho_bar}")
    return RhoSchedule(lambda k: 1.0 + rho_bar * math.sin(k), rho_bar, f"band({rho_bar!r})")


def as_rho_schedule(rho: Union[RhoSchedule, float, Sequence[float], Callable[[int], float]]) -> RhoSchedule:
    if isinstance(rho, RhoSchedule):
        return rho
    if isinstance(rho, (int, float)):
        return constant_rho(float(rho))
    if callable(rho):
        return RhoSchedule(rho)
    seq = [float(r) for r in rho]
    for r in seq:
        check_rho(r)
    rb = max(abs(1.0 - r) for r in seq) if seq else None
    return RhoSchedule(lambda k: seq[(k - 1) % len(seq)], rb, "sequence")


@dataclass(eq=False)
class IterationRecord:
    k: int
    separator: Separator
    gamma: float
    rho: float
    phi: float
    grad_norm_sq: float
    state_before: IterateState
    state_after: IterateState
    certificate: object = None
    ergodic: Optional[tuple[EnlargementTriple, EnlargementTriple, float]] = None

    @property
    def xtriple(self) -> EnlargementTriple:
        return self.separator.xtriple

    @property
    def ytriple(self) -> EnlargementTriple:
        return self.separator.ytriple


@dataclass(frozen=True)
class Termination:
    kind: str  # "converged" | "max_iter" | "exact"
    k: int
    candidate: Optional[str] = None

    def __str__(self):
        if self.kind == "converged":
            return f"Converged({self.k}, {self.candidate})"
        if self.kind == "exact":
            return f"ExactSolutionFound({self.k})"
        return "MaxIter"


@dataclass(eq=False)
class Trace:
    s0: IterateState
    records: list[IterationRecord] = field(default_factory=list)
    termination: Optional[Termination] = None
    first_stop: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def final_state(self) -> IterateState:
        return self.records[-1].state_after if self.records else self.s0


def run(oracle: SeparatorOracle, s0: IterateState, rho_schedule, stop: StopCriterion,
        max_iter: int, stop_on: Sequence[str] = (POINTWISE, ERGODIC)) -> tuple[Trace, Termination]:
    """Iterate ``s_k = s_{k-1} - rho_k gamma_k grad phi_k`` until a stop test passes.

    Both the pointwise triples and the ergodic snapshot are tested every
    iteration; ``trace.first_stop`` records the first k at which each one
    passed, while only the kinds in ``stop_on`` end the run.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rho_schedule = as_rho_schedule(rho_schedule)
    # the concrete methods stop once grad phi = 0 (their triples then solve the problem);
    # the generic framework just takes gamma = 0 and continues
    stops_when_flat = bool(getattr(oracle, "stops_when_flat", False))
    trace = Trace(s0)
    acc = ergodic.ErgodicAccumulator.empty(s0.dim)
    s = s0
    term = Termination("max_iter", max_iter)
    for k in range(1, max_iter + 1):
        sep, cert = oracle(k, s)
        rho = check_rho(rho_schedule(k))
        if cert is not None:
            cert = replace(cert, rho=rho)
        phi = evaluate(sep, s)
        gsq = sep.grad_norm_sq
        if gsq == 0.0:
            if phi > 0.0:
                raise DegenerateSeparatorError(f"iteration {k}: phi = {phi:.3e} > 0 with zero gradient")
            if stops_when_flat:
                erg = ergodic.snapshot(acc) if acc.Gamma > 0 else None
                trace.records.append(IterationRecord(k, sep, 0.0, rho, phi, gsq, s, s, cert, erg))
                term = Termination("exact", k)
                break
        g = phi / gsq if phi > 0.0 else 0.0
        if g > 0.0:
            step = rho * g
            s_new = IterateState(s.z - step * sep.grad_z, s.w - step * sep.grad_w)
        else:
            s_new = s
        acc = ergodic.update(acc, sep.xtriple, sep.ytriple, rho, g)
        erg = ergodic.snapshot(acc) if acc.Gamma > 0 else None
        trace.records.append(IterationRecord(k, sep, g, rho, phi, gsq, s, s_new, cert, erg))
        s = s_new
        passed = []
        if check_stop(sep.xtriple, sep.ytriple, stop):
            passed.append(POINTWISE)
        if erg is not None and check_stop(erg[0], erg[1], stop):
            passed.append(ERGODIC)
        for kind in passed:
            trace.first_stop.setdefault(kind, k)
        hit = [p for p in passed if p in stop_on]
        if hit:
            term = Termination("converged", k, hit[0])
            break
    trace.termination = term
    return trace, term


CSV_HEADER_HEAD = ["k", "gamma", "rho", "phi", "grad_norm_sq", "res_ab", "res_xy", "eps_x", "eps_y"]
CSV_HEADER_TAIL = ["erg_res_ab", "erg_res_xy", "erg_eps_x", "erg_eps_y", "Gamma"]


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(trace: Trace, out) -> None:
    """Write the trace as CSV (17 significant digits) to a path or text stream."""
    if isinstance(out, (str, bytes)) or hasattr(out, "__fspath__"):
        with open(out, "w", newline="") as fh:
            write_trace_csv(trace, fh)
        return
    n = trace.s0.dim
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER_HEAD + [f"z{i}" for i in range(n)] + [f"w{i}" for i in range(n)]
                    + CSV_HEADER_TAIL)
    for rec in trace.records:
        r_ab, r_xy = residuals(rec.xtriple, rec.ytriple)
        row = [str(rec.k)] + [fmt(v) for v in (rec.gamma, rec.rho, rec.phi, rec.grad_norm_sq, r_ab, r_xy,
                                                rec.xtriple.eps, rec.ytriple.eps)]
        row += [fmt(v) for v in rec.state_after.z] + [fmt(v) for v in rec.state_after.w]
        if rec.ergodic is None:
            row += ["nan"] * 5
        else:
            ex, ey, G = rec.ergodic
            e_ab, e_xy = residuals(ex, ey)
            row += [fmt(v) for v in (e_ab, e_xy, ex.eps, ey.eps, G)]
        writer.writerow(row)


def trace_csv_text(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()
