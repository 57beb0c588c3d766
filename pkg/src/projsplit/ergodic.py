"""Running weighted averages of the triples generated by a projective run.

Weights are ``rho_j * gamma_j``.  Iterations with zero weight are counted but
contribute nothing, so snapshots are defined as soon as one step moved.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .operators import EnlargementTriple

CLAMP_TOL = 1e-10


class EmptyAccumulatorError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ErgodicAccumulator:
    Gamma: float
    Sx: np.ndarray
    Sb: np.ndarray
    Sy: np.ndarray
    Sa: np.ndarray
    Sxb: float
    Sya: float
    count: int = 0

    @classmethod
    def empty(cls, n: int) -> "ErgodicAccumulator":
        z = np.zeros(n)
        return cls(0.0, z, z, z, z, 0.0, 0.0, 0)


def update(acc: ErgodicAccumulator, xt: EnlargementTriple, yt: EnlargementTriple,
           rho: float, gamma: float) -> ErgodicAccumulator:
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    wt = rho * gamma
    if wt == 0.0:
        return replace(acc, count=acc.count + 1)
    x, b, y, a = xt.point, xt.value, yt.point, yt.value
    return ErgodicAccumulator(
        Gamma=acc.Gamma + wt,
        Sx=acc.Sx + wt * x,
        Sb=acc.Sb + wt * b,
        Sy=acc.Sy + wt * y,
        Sa=acc.Sa + wt * a,
        Sxb=acc.Sxb + wt * (xt.eps + float(x @ b)),
        Sya=acc.Sya + wt * (yt.eps + float(y @ a)),
        count=acc.count + 1,
    )


def _eps_bar(S: float, mean_p: np.ndarray, mean_v: np.ndarray, Gamma: float, scale: float) -> float:
    e = S / Gamma - float(mean_p @ mean_v)
    if e < 0.0:
        if e < -CLAMP_TOL * max(1.0, scale):
            raise ValueError(f"ergodic eps {e:.3e} is negative beyond rounding")
        e = 0.0
    return e


def snapshot(acc: ErgodicAccumulator) -> tuple[EnlargementTriple, EnlargementTriple, float]:
    """Ergodic triples ``(xbar, bbar, epsx_bar)``, ``(ybar, abar, epsy_bar)`` and Gamma."""
    if not acc.Gamma > 0.0:
        raise EmptyAccumulatorError("no step with positive weight has been accumulated")
    G = acc.Gamma
    xbar, bbar = acc.Sx / G, acc.Sb / G
    ybar, abar = acc.Sy / G, acc.Sa / G
    ex = _eps_bar(acc.Sxb, xbar, bbar, G, abs(acc.Sxb) / G)
    ey = _eps_bar(acc.Sya, ybar, abar, G, abs(acc.Sya) / G)
    return EnlargementTriple(xbar, bbar, ex), EnlargementTriple(ybar, abar, ey), G
