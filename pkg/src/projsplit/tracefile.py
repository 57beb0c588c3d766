"""Lossless binary trace bundles (``.npz``) so a finished run can be re-verified later.

The CSV trace only carries norms; the bundle keeps every triple, state and
certificate so :func:`load_trace` rebuilds an equivalent :class:`Trace`.
"""
from __future__ import annotations

import json

import numpy as np

from . import ergodic
from .analysis import BoundCertificate, Variant
from .engine import IterationRecord, Termination, Trace
from .operators import EnlargementTriple
from .separator import IterateState, build_separator

CERT_FIELDS = ("lam", "mu", "alpha", "theta", "delta_param", "xi", "tau", "rho", "sigma", "eta")


def _nan(v) -> float:
    return np.nan if v is None else float(v)


def save_trace(trace: Trace, path) -> None:
    recs = trace.records
    n = trace.s0.dim

    def stack(f):
        return np.array([f(r) for r in recs], dtype=float).reshape(len(recs), n)

    arrays = dict(
        s0=trace.s0.stacked(),
        k=np.array([r.k for r in recs], dtype=np.int64),
        scalars=np.array([[r.gamma, r.rho, r.phi, r.grad_norm_sq, r.xtriple.eps, r.ytriple.eps] for r in recs],
                         dtype=float).reshape(len(recs), 6),
        x=stack(lambda r: r.xtriple.point), b=stack(lambda r: r.xtriple.value),
        y=stack(lambda r: r.ytriple.point), a=stack(lambda r: r.ytriple.value),
        z_before=stack(lambda r: r.state_before.z), w_before=stack(lambda r: r.state_before.w),
        z_after=stack(lambda r: r.state_after.z), w_after=stack(lambda r: r.state_after.w),
        cert=np.array([[_nan(getattr(r.certificate, f, None)) for f in CERT_FIELDS] for r in recs],
                      dtype=float).reshape(len(recs), len(CERT_FIELDS)),
    )
    variant = recs[0].certificate.variant if recs and recs[0].certificate is not None else None
    term = trace.termination
    meta = {"variant": Variant(variant).value if variant is not None else None,
            "termination": None if term is None else [term.kind, term.k, term.candidate],
            "first_stop": trace.first_stop}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_trace(path) -> Trace:
    with np.load(path, allow_pickle=False) as f:
        d = {k: f[k] for k in f.files}
    meta = json.loads(str(d["meta"]))
    n = d["s0"].size // 2
    trace = Trace(IterateState(d["s0"][:n], d["s0"][n:]))
    variant = Variant(meta["variant"]) if meta["variant"] else None
    acc = ergodic.ErgodicAccumulator.empty(n)
    term = meta["termination"]
    for i, k in enumerate(d["k"]):
        g, rho, phi, gsq, ex, ey = d["scalars"][i]
        xt = EnlargementTriple(d["x"][i], d["b"][i], float(ex))
        yt = EnlargementTriple(d["y"][i], d["a"][i], float(ey))
        cert = None
        if variant is not None:
            vals = {f: (None if np.isnan(v) else float(v)) for f, v in zip(CERT_FIELDS, d["cert"][i])}
            vals["sigma"] = vals["sigma"] or 0.0
            vals["eta"] = vals["eta"] or 1.0
            cert = BoundCertificate(variant, **vals)
        exact_stop = term is not None and term[0] == "exact" and i == len(d["k"]) - 1
        if not exact_stop:
            acc = ergodic.update(acc, xt, yt, float(rho), float(g))
        erg = ergodic.snapshot(acc) if acc.Gamma > 0 else None
        trace.records.append(IterationRecord(
            int(k), build_separator(xt, yt), float(g), float(rho), float(phi), float(gsq),
            IterateState(d["z_before"][i], d["w_before"][i]), IterateState(d["z_after"][i], d["w_after"][i]),
            cert, erg))
    trace.termination = Termination(term[0], int(term[1]), term[2]) if term else None
    trace.first_stop = {k: int(v) for k, v in meta["first_stop"].items()}
    return trace
