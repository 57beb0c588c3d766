"""Command-line front end.

    projsplit solve      --config C [--out DIR] [--seed N] [--max-iter N]
    projsplit verify     --config C [--trace T.npz] [--out DIR] [--seed N] [--max-iter N]
    projsplit compare    --config C [--out DIR] [--seed N] [--max-iter N]
    projsplit bruteforce (--config C | --problem REF) [--radius R] [--step H] [--out DIR]

Exit codes: 0 success, 1 solver error or violated inequality, 2 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (IDENTITY_TOL, CertificateError, RateReport, check_rates, check_trace_iterations,
                       fejer_violations, sum_identity_errors, telescoping_errors, trace_arrays)
from .config import ConfigError, RunConfig, RunResult, execute, load_config, variant_config
from .engine import fmt, residuals, write_trace_csv
from .ergodic import EmptyAccumulatorError
from .operators import OperatorError
from .problems import ProblemError, brute_force_solution, load_problem
from .separator import DegenerateSeparatorError, ParameterError
from .tracefile import load_trace, save_trace

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SOLVER_ERRORS = (DegenerateSeparatorError, OperatorError, ParameterError, EmptyAccumulatorError,
                 CertificateError, FloatingPointError, np.linalg.LinAlgError)


def _num(v) -> Optional[float]:
    """JSON-safe float (None for nan/inf); repr round-trips exactly."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _vec(a) -> list:
    return [_num(v) for v in np.asarray(a, float)]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _out_dir(arg: Optional[str]) -> Path:
    p = Path(arg or ".")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(args) -> RunConfig:
    return load_config(args.config).with_overrides(seed=args.seed, max_iter=args.max_iter)


def run_summary(res: RunResult) -> dict:
    tr, term = res.trace, res.termination
    last = tr.records[-1] if tr.records else None
    final = res.unscaled(tr.final_state)
    out = {
        "problem": res.problem.name,
        "variant": res.config.variant.value,
        "termination": {"kind": term.kind, "k": term.k, "candidate": term.candidate, "text": str(term)},
        "iterations": len(tr),
        "first_stop": tr.first_stop,
        "eta": res.eta,
        "d0": _num(res.d0),
        "d0_source": res.d0_source,
        "final_state": {"z": _vec(final.z), "w": _vec(final.w)},
    }
    if last is not None:
        r_ab, r_xy = residuals(last.xtriple, last.ytriple)
        out["final_residuals"] = {"res_ab": _num(r_ab), "res_xy": _num(r_xy),
                                  "eps_x": _num(last.xtriple.eps), "eps_y": _num(last.ytriple.eps)}
    erg = last.ergodic if last is not None else None
    if erg is not None:
        e_ab, e_xy = residuals(erg[0], erg[1])
        out["final_ergodic_residuals"] = {"res_ab": _num(e_ab), "res_xy": _num(e_xy), "eps_x": _num(erg[0].eps),
                                          "eps_y": _num(erg[1].eps), "Gamma": _num(erg[2])}
    else:
        out["final_ergodic_residuals"] = None
    return out


def cmd_solve(args) -> int:
    cfg = _load(args)
    out = _out_dir(args.out)
    res = execute(cfg)
    write_trace_csv(res.trace, out / cfg.trace_file)
    save_trace(res.trace, out / (Path(cfg.trace_file).stem + ".npz"))
    summary = run_summary(res)
    _write_json(out / cfg.summary_file, summary)
    print(f"{res.problem.name} {cfg.variant.value}: {summary['termination']['text']} "
          f"after {summary['iterations']} iterations")
    return EXIT_OK


def verify_result(res: RunResult, seed: int = 0) -> tuple[dict, RateReport]:
    """All per-iteration and run-level checks of one trace: a JSON-ready report and the rate report."""
    trace, d0 = res.trace, res.d0
    reps = check_trace_iterations(trace, d0, ops=res.ops)
    failures: dict[str, dict] = {}
    info_checks: dict[str, dict] = {}
    for rep in reps:
        for c in rep.checks:
            if c.ok:
                continue
            bucket = info_checks if c.informational else failures
            f = bucket.setdefault(c.name, {"count": 0, "first_k": rep.k, "worst_observed": c.observed,
                                           "bound": c.bound})
            f["count"] += 1
            if c.observed - c.bound > f["worst_observed"] - f["bound"]:
                f["worst_observed"], f["bound"] = c.observed, c.bound
    for bucket in (failures, info_checks):
        for f in bucket.values():
            f["worst_observed"], f["bound"] = _num(f["worst_observed"]), _num(f["bound"])

    run_checks = {}
    if trace.records:
        ta = trace_arrays(trace)
        rng = np.random.default_rng(seed)
        n2 = trace.s0.dim * 2
        probes = [rng.standard_normal((4, n2)) * 3.0]
        sols = res.problem.scaled_solutions(res.eta)
        if sols is not None:
            probes.insert(0, np.atleast_2d(sols.sample()))
        probes = np.vstack(probes)
        se = float(sum_identity_errors(trace, probes, ta).max())
        run_checks["sum_identity"] = {"max_rel_error": se, "tol": IDENTITY_TOL, "ok": se <= IDENTITY_TOL}
        te = float(telescoping_errors(trace, ta).max())
        run_checks["telescoping"] = {"max_rel_error": te, "tol": IDENTITY_TOL, "ok": te <= IDENTITY_TOL}
        if sols is not None:
            fv = fejer_violations(trace, np.atleast_2d(sols.sample()), arrays=ta)
            run_checks["fejer"] = {"violations": fv, "ok": fv == 0}

    if d0 is None:
        rates = RateReport(res.config.variant.value, skipped="initial distance unknown")
    else:
        rates = check_rates(trace, d0, constants=res.constants)
    ok = not failures and all(c["ok"] for c in run_checks.values()) and rates.satisfied
    return {
        "ok": ok,
        "problem": res.problem.name,
        "variant": res.config.variant.value,
        "termination": str(res.termination),
        "iterations": len(trace),
        "d0": _num(d0),
        "d0_source": res.d0_source,
        "iteration_failures": failures,
        "informational": info_checks,
        "run_checks": run_checks,
        "rates": json.loads(rates.to_json(every=max(1, len(trace) // 200))),
    }, rates


def cmd_verify(args) -> int:
    from .plotting import rates_figure

    cfg = _load(args)
    out = _out_dir(args.out)
    # with a saved trace the run only supplies problem, scaling and constants
    res = execute(cfg.with_overrides(max_iter=1) if args.trace else cfg)
    if args.trace:
        try:
            trace = load_trace(args.trace)
        except (OSError, KeyError, ValueError) as e:
            raise ConfigError(f"cannot read trace bundle {args.trace}: {e}")
        if trace.s0.dim != res.problem.dim:
            raise ConfigError("trace dimension does not match the configured problem")
        res.trace, res.termination = trace, trace.termination
        sols = res.problem.scaled_solutions(res.eta)
        if sols is not None:
            res.d0, res.d0_source = float(sols.distance(trace.s0.stacked())), "declared"
    report, rates = verify_result(res, cfg.seed)
    _write_json(out / "report.json", report)
    rates_figure(rates, out / "rates.png", title=f"{res.problem.name} / {cfg.variant.value}")
    status = "PASS" if report["ok"] else "FAIL"
    print(f"{status} {res.problem.name} {cfg.variant.value}: {report['iterations']} iterations, "
          f"{len(report['iteration_failures'])} failing per-iteration checks, "
          f"rates {'satisfied' if rates.satisfied else 'VIOLATED'}"
          + (f" ({rates.skipped})" if rates.skipped else ""))
    for name, f in report["iteration_failures"].items():
        print(f"  {name}: {f['count']} failures, first at k={f['first_k']}")
    for c in rates.checks:
        if not c.satisfied:
            print(f"  {c.theorem}: max observed/bound = {c.max_ratio:.6g}")
    return EXIT_OK if report["ok"] else EXIT_FAIL


COMPARE_HEADER = ["variant", "k", "res_ab", "res_xy", "eps", "erg_res_ab", "erg_res_xy", "erg_eps"]


def cmd_compare(args) -> int:
    from .plotting import compare_figure

    cfg = _load(args)
    if not cfg.variants:
        raise ConfigError("compare needs a 'variants' list in the config")
    out = _out_dir(args.out)
    cfgs = [variant_config(cfg, ov) for ov in cfg.variants]
    problem = load_problem(cfg.problem)
    series = {}
    labels = []
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for vc in cfgs:
            label = vc.variant.value
            while label in labels:
                label += "'"
            labels.append(label)
            res = execute(vc, problem)
            ks, pw, eg = [], [], []
            for r in res.trace.records:
                r_ab, r_xy = residuals(r.xtriple, r.ytriple)
                row = [label, str(r.k), fmt(r_ab), fmt(r_xy), fmt(r.xtriple.eps + r.ytriple.eps)]
                if r.ergodic is None:
                    row += ["nan"] * 3
                    e = math.nan
                else:
                    e_ab, e_xy = residuals(r.ergodic[0], r.ergodic[1])
                    row += [fmt(e_ab), fmt(e_xy), fmt(r.ergodic[0].eps + r.ergodic[1].eps)]
                    e = max(e_ab, e_xy)
                w.writerow(row)
                ks.append(r.k); pw.append(max(r_ab, r_xy)); eg.append(e)
            series[label] = (np.array(ks), np.array(pw), np.array(eg))
            print(f"{label}: {res.termination} after {len(res.trace)} iterations")
    compare_figure(series, out / "compare.png", title=problem.name)
    return EXIT_OK


def cmd_bruteforce(args) -> int:
    if args.problem:
        try:
            problem = load_problem(args.problem)
        except (OSError, ProblemError) as e:
            raise ConfigError(f"cannot load problem {args.problem!r}: {e}")
    elif args.config:
        cfg = load_config(args.config)
        try:
            problem = load_problem(cfg.problem)
        except (OSError, ProblemError) as e:
            raise ConfigError(f"cannot load problem {cfg.problem!r}: {e}")
    else:
        raise ConfigError("bruteforce needs --problem or --config")
    if not (args.radius > 0 and args.step > 0):
        raise ConfigError("--radius and --step must be positive")
    try:
        boxes = brute_force_solution(problem, args.radius, args.step)
    except ProblemError as e:
        raise ConfigError(str(e))
    n = problem.dim
    recs = [{"z_lo": _vec(b.lo[:n]), "z_hi": _vec(b.hi[:n]), "w_lo": _vec(b.lo[n:]), "w_hi": _vec(b.hi[n:])}
            for b in boxes]
    for r in recs:
        print(json.dumps(r))
    if not recs:
        print("no solution within the grid")
    if args.out:
        _write_json(_out_dir(args.out) / "boxes.json", {"problem": problem.name, "radius": args.radius,
                                                        "step": args.step, "boxes": recs})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projsplit", description="Projective splitting solvers and rate checks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML run configuration")
        sp.add_argument("--out", default=None, help="output directory (default: current)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--max-iter", dest="max_iter", type=int, default=None, help="override max_iter")

    common(sub.add_parser("solve", help="run a solver and write trace.csv / summary.json"))
    v = sub.add_parser("verify", help="check lemma and rate inequalities on a run; writes report.json, rates.png")
    common(v)
    v.add_argument("--trace", default=None, help="verify a saved trace bundle (.npz) instead of a fresh run")
    common(sub.add_parser("compare", help="run the config's variants; writes compare.csv, compare.png"))
    b = sub.add_parser("bruteforce", help="grid search for the extended solution set (dimension <= 2)")
    common(b, config_required=False)
    b.add_argument("--problem", default=None, help="problem reference (suite:<name> or YAML path)")
    b.add_argument("--radius", type=float, default=10.0)
    b.add_argument("--step", type=float, default=1e-3)
    return p


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "compare": cmd_compare, "bruteforce": cmd_bruteforce}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SOLVER_ERRORS as e:
        print(f"solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
