"""Run configuration: YAML schema, validation and a single entry point that executes a run.

See ``docs/config.md`` for the schema.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
import yaml

from . import engine
from .analysis import RunConstants, Variant
from .engine import RhoSchedule, StopCriterion, Trace, Termination
from .inexact import SigmaCriterion, parallel_inexact_oracle, sequential_inexact_oracle
from .problems import BoxSet, Problem, ProblemError, brute_force_solution, load_problem
from .separator import IterateState, ParameterError
from .splitting import (PsmSchedule, band_a123, constant_schedule, psm_oracle, scaled_psm_oracle,
                        spingarn_oracle, spingarn_schedule)

PRESETS = ("constant", "band-a123", "spingarn")
TOP_KEYS = {"problem", "variant", "schedule", "rho", "eta", "sigma", "stress", "seed", "stop", "max_iter",
            "start", "output", "variants"}


class ConfigError(ValueError):
    """Invalid configuration; reported with exit code 2."""


def _num(v, key: str) -> float:
    # YAML 1.1 reads "1e-6" as a string
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}")


def _int(v, key: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    try:
        f = float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if not f.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return int(f)


@dataclass(frozen=True)
class ScheduleConfig:
    preset: str = "constant"
    lam: float = 1.0
    mu: float = 1.0
    alpha: float = 0.0
    lam_lo: float = 0.5
    lam_hi: float = 2.0
    alpha_max: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    problem: str
    variant: Variant = Variant.EXACT_PSM
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    rho: Any = 1.0                      # float, {"band": rho_bar} or a list
    eta: float = 1.0
    sigma: float = 0.0
    stress: float = 0.0
    seed: int = 0
    stop_delta: float = 1e-6
    stop_eps: float = 1e-6
    max_iter: int = 100000
    z0: Optional[tuple] = None
    w0: Optional[tuple] = None
    trace_file: str = "trace.csv"
    summary_file: str = "summary.json"
    variants: tuple = ()               # raw override mappings, one per compared variant
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_overrides(self, seed: Optional[int] = None, max_iter: Optional[int] = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if max_iter is not None:
            if max_iter < 1:
                raise ConfigError("max_iter must be >= 1")
            cfg = replace(cfg, max_iter=int(max_iter))
        return cfg


def parse_config(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "problem" not in d:
        raise ConfigError("config needs a 'problem' entry")
    try:
        variant = Variant(d.get("variant", "psm"))
    except ValueError:
        raise ConfigError(f"unknown variant {d.get('variant')!r}; expected one of {[v.value for v in Variant]}")
    sd = d.get("schedule", {}) or {}
    if not isinstance(sd, dict):
        raise ConfigError("schedule must be a mapping")
    sched = ScheduleConfig(
        preset=str(sd.get("preset", "spingarn" if variant is Variant.SPINGARN else "constant")),
        **{k: _num(sd[k], f"schedule.{k}") for k in ("lam", "mu", "alpha", "lam_lo", "lam_hi", "alpha_max")
           if k in sd})
    stop = d.get("stop", {}) or {}
    start = d.get("start") or {}
    out = d.get("output") or {}
    for key, sub in (("stop", stop), ("start", start), ("output", out)):
        if not isinstance(sub, dict):
            raise ConfigError(f"{key} must be a mapping")
    rho = d.get("rho", 1.0)
    if isinstance(rho, dict):
        if set(rho) != {"band"}:
            raise ConfigError("rho mapping must be {band: rho_bar}")
        rho = {"band": _num(rho["band"], "rho.band")}
    elif isinstance(rho, list):
        rho = tuple(_num(r, "rho[]") for r in rho)
    else:
        rho = _num(rho, "rho")
    cfg = RunConfig(
        problem=str(d["problem"]), variant=variant, schedule=sched, rho=rho,
        eta=_num(d.get("eta", 1.0), "eta"), sigma=_num(d.get("sigma", 0.0), "sigma"),
        stress=_num(d.get("stress", 0.0), "stress"), seed=_int(d.get("seed", 0), "seed"),
        stop_delta=_num(stop.get("delta", 1e-6), "stop.delta"), stop_eps=_num(stop.get("eps", 1e-6), "stop.eps"),
        max_iter=_int(d.get("max_iter", 100000), "max_iter"),
        z0=tuple(_num(v, "start.z") for v in start["z"]) if "z" in start else None,
        w0=tuple(_num(v, "start.w") for v in start["w"]) if "w" in start else None,
        trace_file=str(out.get("trace", "trace.csv")), summary_file=str(out.get("summary", "summary.json")),
        variants=tuple(_variant_override(v) for v in d.get("variants", ()) or ()),
        raw={k: v for k, v in d.items() if k != "variants"},
    )
    validate(cfg)
    for ov in cfg.variants:
        variant_config(cfg, ov)
    return cfg


def _variant_override(v) -> dict:
    if isinstance(v, str):
        v = {"variant": v}
    if not isinstance(v, dict) or "variant" not in v:
        raise ConfigError(f"variants entries are names or mappings with a 'variant' key, got {v!r}")
    if "variants" in v:
        raise ConfigError("variants entries cannot nest")
    if v["variant"] == Variant.SPINGARN.value and "schedule" not in v:
        v = {**v, "schedule": {"preset": "spingarn"}}
    return dict(v)


def variant_config(cfg: RunConfig, override: dict) -> RunConfig:
    """The base configuration with one ``variants`` entry merged over it (validated)."""
    merged = {**cfg.raw, **override}
    try:
        out = parse_config(merged)
    except ConfigError as e:
        raise ConfigError(f"variants entry {override}: {e}")
    return replace(out, seed=cfg.seed, max_iter=cfg.max_iter)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    return parse_config(data)


def validate(cfg: RunConfig) -> None:
    """Check every precondition of the chosen variant before anything runs."""
    try:
        rho_schedule(cfg)
        build_schedule(cfg)
        if not cfg.eta > 0:
            raise ConfigError(f"eta must be positive, got {cfg.eta}")
        if cfg.eta != 1.0 and cfg.variant not in (Variant.SCALED_PSM, Variant.SPINGARN):
            raise ConfigError(f"eta applies to the scaled variants only, not {cfg.variant.value}")
        if not 0.0 <= cfg.stress <= 1.0:
            raise ConfigError(f"stress must lie in [0, 1], got {cfg.stress}")
        if cfg.variant is Variant.PARALLEL_INEXACT:
            SigmaCriterion(cfg.sigma, "parallel")
        elif cfg.variant is Variant.SEQUENTIAL_INEXACT:
            SigmaCriterion(cfg.sigma, "sequential")
        elif cfg.sigma != 0.0 or cfg.stress != 0.0:
            raise ConfigError(f"sigma/stress apply to the inexact variants only, not {cfg.variant.value}")
        if cfg.stop_delta < 0 or cfg.stop_eps < 0:
            raise ConfigError("stop tolerances must be nonnegative")
        if cfg.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
    except (ParameterError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e))


def rho_schedule(cfg: RunConfig) -> RhoSchedule:
    if isinstance(cfg.rho, dict):
        return engine.band_rho(cfg.rho["band"])
    if isinstance(cfg.rho, tuple):
        return engine.as_rho_schedule(list(cfg.rho))
    return engine.constant_rho(cfg.rho)


def build_schedule(cfg: RunConfig) -> PsmSchedule:
    s = cfg.schedule
    if s.preset not in PRESETS:
        raise ConfigError(f"unknown schedule preset {s.preset!r}; expected one of {PRESETS}")
    if cfg.variant is Variant.SPINGARN:
        if s.preset != "spingarn":
            raise ConfigError("the spingarn variant uses the 'spingarn' preset (lam = mu = 1, alpha = 0)")
        return spingarn_schedule()
    if cfg.variant is Variant.SEQUENTIAL_INEXACT:
        if s.preset == "constant" and s.mu != s.lam:
            raise ConfigError("the sequential variant uses one lam for both subproblems (mu must equal lam)")
        if s.alpha not in (0.0, 1.0) or s.alpha_max != 0.0:
            raise ConfigError("alpha is fixed to 1 by the sequential variant")
    if cfg.variant is Variant.PARALLEL_INEXACT and (s.alpha != 0.0 or s.alpha_max != 0.0):
        raise ConfigError("the parallel inexact variant has alpha = 0")
    if s.preset == "spingarn":
        return spingarn_schedule()
    if s.preset == "constant":
        alpha = 0.0 if cfg.variant in (Variant.PARALLEL_INEXACT, Variant.SEQUENTIAL_INEXACT) else s.alpha
        mu = s.lam if cfg.variant is Variant.SEQUENTIAL_INEXACT else s.mu
        return constant_schedule(s.lam, mu, alpha)
    return band_a123(s.lam_lo, s.lam_hi, s.alpha_max)


def build_oracle(cfg: RunConfig, problem: Problem):
    sched = build_schedule(cfg)
    A, B = problem.A, problem.B
    v = cfg.variant
    if v is Variant.EXACT_PSM:
        return psm_oracle(A, B, sched)
    if v is Variant.SCALED_PSM:
        return scaled_psm_oracle(A, B, sched, cfg.eta)
    if v is Variant.SPINGARN:
        return spingarn_oracle(A, B, cfg.eta)
    if v is Variant.PARALLEL_INEXACT:
        return parallel_inexact_oracle(A, B, sched, cfg.sigma, cfg.stress, seed=cfg.seed)
    return sequential_inexact_oracle(A, B, sched, cfg.sigma, cfg.stress, seed=cfg.seed)


def run_eta(cfg: RunConfig) -> float:
    return cfg.eta if cfg.variant in (Variant.SCALED_PSM, Variant.SPINGARN) else 1.0


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    problem: Problem
    trace: Trace
    termination: Termination
    eta: float
    constants: RunConstants
    d0: Optional[float]
    d0_source: str

    @property
    def ops(self):
        return self.problem.scaled_ops(self.eta)

    def unscaled(self, s: IterateState) -> IterateState:
        return IterateState(s.z, s.w / self.eta)


def start_state(cfg: RunConfig, n: int) -> IterateState:
    z = np.zeros(n) if cfg.z0 is None else np.array(cfg.z0, float)
    w = np.zeros(n) if cfg.w0 is None else np.array(cfg.w0, float)
    if z.shape != (n,) or w.shape != (n,):
        raise ConfigError(f"start point must have dimension {n}")
    return IterateState(z, w)


def initial_distance(problem: Problem, s0: IterateState, eta: float) -> tuple[Optional[float], str]:
    """Distance from the (scaled) start to the (scaled) extended solution set, or an over-estimate."""
    sols = problem.scaled_solutions(eta)
    if sols is not None:
        return sols.distance(s0.stacked()), "declared"
    if problem.dim <= 2:
        boxes = brute_force_solution(problem, 10.0, 1e-3)
        if boxes:
            d = min((b.scaled(eta) if eta != 1.0 else b).max_distance(s0.stacked()) for b in boxes)
            return d, "brute-force box-max"
    return None, "unknown"


def execute(cfg: RunConfig, problem: Optional[Problem] = None) -> RunResult:
    try:
        problem = problem or load_problem(cfg.problem)
    except (OSError, ProblemError) as e:
        raise ConfigError(f"cannot load problem {cfg.problem!r}: {e}")
    eta = run_eta(cfg)
    s0u = start_state(cfg, problem.dim)
    s0 = IterateState(s0u.z, eta * s0u.w)
    oracle = build_oracle(cfg, problem)
    rs = rho_schedule(cfg)
    trace, term = engine.run(oracle, s0, rs, StopCriterion(cfg.stop_delta, cfg.stop_eps), cfg.max_iter)
    sched = oracle.schedule
    constants = RunConstants(sched.lam_lo, sched.lam_hi, sched.nu, rs.rho_bar)
    d0, src = initial_distance(problem, s0u, eta)
    return RunResult(cfg, problem, trace, term, eta, constants, d0, src)
