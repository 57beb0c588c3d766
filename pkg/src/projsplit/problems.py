"""Test problems with known extended solution sets, problem files, and a grid oracle.

The extended solution set of ``0 in A(z) + B(z)`` is the set of pairs
``(z, w)`` with ``w in B(z)`` and ``-w in A(z)``.  Points of the product space
are stored stacked as ``(z, w)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import yaml
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .operators import (Affine, MonotoneOperator, NormalConeBox, OperatorError, Scaled, Shifted,
                        SubdiffAbsScaled, Zero, as_vector)

SOLUTION_TOL = 1e-10


class ProblemError(ValueError):
    pass


# ---------------------------------------------------------------- solution sets

@dataclass(frozen=True, eq=False)
class PointSet:
    """Finitely many stacked points ``(z, w)``."""

    points: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if P.shape[1] % 2:
            raise ProblemError("stacked (z, w) points need an even length")
        object.__setattr__(self, "points", P)

    @property
    def dim(self) -> int:
        return self.points.shape[1] // 2

    def distance(self, s) -> float:
        return float(np.min(np.linalg.norm(self.points - as_vector(s), axis=1)))

    def scaled(self, eta: float) -> "PointSet":
        P = self.points.copy()
        P[:, self.dim:] *= eta
        return PointSet(P)

    def sample(self) -> np.ndarray:
        return self.points.copy()

    def contains(self, s, tol: float = 0.0) -> bool:
        return self.distance(s) <= tol


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Axis-aligned box ``[lo, hi]`` in the product space; bounds may be infinite."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = as_vector(self.lo), as_vector(self.hi)
        if lo.shape != hi.shape or lo.shape[0] % 2:
            raise ProblemError("box bounds must share an even length")
        if np.any(lo > hi):
            raise ProblemError("box needs lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0] // 2

    def distance(self, s) -> float:
        s = as_vector(s)
        return float(np.linalg.norm(s - np.clip(s, self.lo, self.hi)))

    def max_distance(self, s) -> float:
        """Largest distance from ``s`` to a point of the box (an over-estimate of the distance to any subset)."""
        s = as_vector(s)
        return float(np.linalg.norm(np.maximum(np.abs(s - self.lo), np.abs(s - self.hi))))

    def scaled(self, eta: float) -> "BoxSet":
        lo, hi = self.lo.copy(), self.hi.copy()
        lo[self.dim:] *= eta
        hi[self.dim:] *= eta
        return BoxSet(lo, hi)

    def sample(self) -> np.ndarray:
        """Corners and centre, with infinite sides replaced by finite points inside."""
        lo = np.where(np.isfinite(self.lo), self.lo, np.where(np.isfinite(self.hi), self.hi - 5.0, 0.0))
        hi = np.where(np.isfinite(self.hi), self.hi, lo + 5.0)
        pts = [lo, hi, 0.5 * (lo + hi)]
        return np.unique(np.array(pts), axis=0)

    def contains(self, s, tol: float = 0.0) -> bool:
        return self.distance(s) <= tol

    def width(self) -> np.ndarray:
        return self.hi - self.lo


SolutionSet = Union[PointSet, BoxSet]


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    A: MonotoneOperator
    B: MonotoneOperator
    solutions: Optional[SolutionSet] = None
    description: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        if self.A.dim != self.B.dim:
            raise ProblemError(f"{self.name}: A and B differ in dimension")
        if self.solutions is not None and self.solutions.dim != self.A.dim:
            raise ProblemError(f"{self.name}: solution set has the wrong dimension")

    @property
    def dim(self) -> int:
        return self.A.dim

    def scaled_ops(self, eta: float) -> tuple[MonotoneOperator, MonotoneOperator]:
        if eta == 1.0:
            return self.A, self.B
        return Scaled(self.A, eta), Scaled(self.B, eta)

    def scaled_solutions(self, eta: float) -> Optional[SolutionSet]:
        if self.solutions is None:
            return None
        return self.solutions if eta == 1.0 else self.solutions.scaled(eta)


# ---------------------------------------------------------------- batched operator values

def value_boxes(op: MonotoneOperator, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``value_box`` for a batch of points; empty values give ``lo = +inf, hi = -inf``."""
    Z = np.atleast_2d(Z)
    if isinstance(op, Affine):
        V = Z @ op.M.T + op.q
        return V, V
    if isinstance(op, Zero):
        V = np.zeros_like(Z)
        return V, V
    if isinstance(op, NormalConeBox):
        inside = np.all((Z >= op.lo) & (Z <= op.hi), axis=1, keepdims=True)
        vlo = np.where(Z == op.lo, -np.inf, 0.0)
        vhi = np.where(Z == op.hi, np.inf, 0.0)
        return np.where(inside, vlo, np.inf), np.where(inside, vhi, -np.inf)
    if isinstance(op, SubdiffAbsScaled):
        s = np.sign(Z)
        vlo = np.where(s == 0, -op.weight, s * op.weight)
        vhi = np.where(s == 0, op.weight, s * op.weight)
        return vlo, vhi
    if isinstance(op, Shifted):
        lo, hi = value_boxes(op.base, Z)
        return lo + op.shift, hi + op.shift
    if isinstance(op, Scaled):
        lo, hi = value_boxes(op.base, Z)
        return op.eta * lo, op.eta * hi
    # generic fallback, one point at a time
    los, his = [], []
    for z in Z:
        box = op.value_box(z)
        if box is None:
            los.append(np.full(Z.shape[1], np.inf)); his.append(np.full(Z.shape[1], -np.inf))
        else:
            los.append(box[0]); his.append(box[1])
    return np.array(los), np.array(his)


def inclusion_residual(A: MonotoneOperator, B: MonotoneOperator, Z: np.ndarray) -> np.ndarray:
    """Distance from 0 to A(z) + B(z) for each row z (``inf`` where a value set is empty)."""
    alo, ahi = value_boxes(A, Z)
    blo, bhi = value_boxes(B, Z)
    with np.errstate(invalid="ignore"):
        lo, hi = alo + blo, ahi + bhi
        gap = np.maximum(np.maximum(lo, -hi), 0.0)
    gap = np.where(np.isnan(gap) | (lo > hi), np.inf, gap)
    return np.sqrt(np.sum(gap ** 2, axis=1))


def check_declared_solutions(problem: Problem, tol: float = SOLUTION_TOL) -> bool:
    """Every sampled declared pair satisfies ``w in B(z)`` and ``-w in A(z)`` within ``tol``."""
    if problem.solutions is None:
        return True
    n = problem.dim
    for p in problem.solutions.sample():
        z, w = p[:n], p[n:]
        for op, v in ((problem.B, w), (problem.A, -w)):
            lo, hi = value_boxes(op, z[None, :])
            if np.any(v < lo[0] - tol) or np.any(v > hi[0] + tol):
                return False
    return True


# ---------------------------------------------------------------- suite

def affine_pair(MA, qA, MB, qB, name: str = "affine-pair", seed: Optional[int] = None) -> Problem:
    """Two affine operators whose sum has a positive definite symmetric part."""
    A, B = Affine(MA, qA), Affine(MB, qB)
    S = A.M + B.M
    if np.linalg.eigvalsh(S).min() <= 1e-12:
        raise ProblemError("M_A + M_B must be positive definite")
    z = np.linalg.solve(S, -(A.q + B.q))
    w = B.M @ z + B.q
    return Problem(name, A, B, PointSet(np.concatenate([z, w])),
                   f"affine pair, n={A.dim}", seed)


def p1() -> Problem:
    return Problem("p1", Affine([[1.0]], [0.0]), Affine([[1.0]], [-2.0]), PointSet([[1.0, -1.0]]),
                   "A = identity, B = z - 2")


def p2(n: int, seed: int) -> Problem:
    rng = np.random.default_rng(seed)
    r = max(1, n // 2)
    G = rng.standard_normal((n, r))
    MA = G @ G.T / n                               # PSD, singular when r < n
    H = rng.standard_normal((n, n))
    MB = H @ H.T / n + 0.5 * np.eye(n)             # PD
    qA, qB = rng.standard_normal(n), rng.standard_normal(n)
    return affine_pair(MA, qA, MB, qB, name=f"p2-n{n}", seed=seed)


def solve_box_vi(M: np.ndarray, q: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Solve 0 in Mz + q + N_[lo,hi](z) for positive definite M by enumerating active sets."""
    n = q.shape[0]
    best = None
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        pat = np.array(pattern)
        z = np.where(pat < 0, lo, np.where(pat > 0, hi, 0.0)).astype(float)
        free = pat == 0
        if free.any():
            rhs = -q[free] - M[np.ix_(free, ~free)] @ z[~free]
            z[free] = np.linalg.solve(M[np.ix_(free, free)], rhs)
            if np.any(z[free] < lo[free] - 1e-12) or np.any(z[free] > hi[free] + 1e-12):
                continue
        g = M @ z + q
        if np.any(g[pat < 0] < -1e-12) or np.any(g[pat > 0] > 1e-12):
            continue
        best = z
        break
    if best is None:
        raise ProblemError("active-set enumeration found no solution")
    return best


def solve_lasso(M: np.ndarray, q: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Solve 0 in weight*sign(z) + Mz + q for positive definite M by enumerating sign patterns."""
    n = q.shape[0]
    for pattern in itertools.product((0, 1, -1), repeat=n):
        s = np.array(pattern, dtype=float)
        free = s != 0
        z = np.zeros(n)
        if free.any():
            z[free] = np.linalg.solve(M[np.ix_(free, free)], -q[free] - weight[free] * s[free])
            if np.any(np.sign(z[free]) != s[free]):
                continue
        g = M @ z + q
        if np.any(np.abs(g[~free]) > weight[~free] + 1e-12):
            continue
        return z
    raise ProblemError("sign-pattern enumeration found no solution")


def p3(n: int, seed: int) -> Problem:
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    M = G @ G.T / n + 0.5 * np.eye(n)
    q = 2.0 * rng.standard_normal(n)
    lo, hi = -np.ones(n), np.ones(n)
    z = solve_box_vi(M, q, lo, hi)
    fp = np.linalg.norm(z - np.clip(z - (M @ z + q), lo, hi))
    if fp > 1e-10:
        raise ProblemError(f"box VI solution fails the projection fixed-point test ({fp:.2e})")
    w = -(M @ z + q)
    return Problem(f"p3-n{n}", Affine(M, q), NormalConeBox(lo, hi), PointSet(np.concatenate([z, w])),
                   "variational inequality on [-1, 1]^n", seed)


def p4(n: int, seed: int) -> Problem:
    if n == 1:
        M, q, weight = np.eye(1), np.array([-2.0]), np.ones(1)
    else:
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((n, n))
        M = G @ G.T / n + np.eye(n)
        q = 2.0 * rng.standard_normal(n)
        weight = rng.uniform(0.5, 1.0, n)
    z = solve_lasso(M, q, weight)
    w = M @ z + q
    return Problem(f"p4-n{n}", SubdiffAbsScaled(weight), Affine(M, q), PointSet(np.concatenate([z, w])),
                   "l1 term plus a strongly monotone affine term", seed if n > 1 else None)


def p5() -> Problem:
    """A = d|z|, B = -1: every z >= 0 solves, with w = -1."""
    return Problem("p5", SubdiffAbsScaled([1.0]), Affine([[0.0]], [-1.0]),
                   BoxSet([0.0, -1.0], [np.inf, -1.0]), "non-singleton solution set")


SUITE_SEEDS = {"p2-n2": 11, "p2-n10": 12, "p2-n50": 13, "p3-n2": 21, "p3-n5": 22, "p4-n5": 31}


def suite() -> list[Problem]:
    return [
        p1(),
        p2(2, SUITE_SEEDS["p2-n2"]), p2(10, SUITE_SEEDS["p2-n10"]), p2(50, SUITE_SEEDS["p2-n50"]),
        p3(2, SUITE_SEEDS["p3-n2"]), p3(5, SUITE_SEEDS["p3-n5"]),
        p4(1, 0), p4(5, SUITE_SEEDS["p4-n5"]),
        p5(),
    ]


def get_problem(name: str) -> Problem:
    for p in suite():
        if p.name == name:
            return p
    raise ProblemError(f"unknown suite problem {name!r}")


# ---------------------------------------------------------------- problem files

def _op_from_dict(d: dict) -> MonotoneOperator:
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise ProblemError(f"operator entry needs a 'kind': {d!r}")
    try:
        if kind == "affine":
            return Affine(np.array(d["M"], float), np.array(d["q"], float))
        if kind == "normal_cone_box":
            return NormalConeBox(d["lo"], d["hi"])
        if kind == "subdiff_abs":
            return SubdiffAbsScaled(d["weight"])
        if kind == "shifted":
            return Shifted(_op_from_dict(d["base"]), d["shift"])
        if kind == "scaled":
            return Scaled(_op_from_dict(d["base"]), float(d["eta"]))
        if kind == "zero":
            return Zero(int(d["n"]))
    except KeyError as e:
        raise ProblemError(f"operator of kind {kind!r} is missing field {e}")
    except OperatorError as e:
        raise ProblemError(str(e))
    raise ProblemError(f"unknown operator kind {kind!r}")


def _op_to_dict(op: MonotoneOperator) -> dict:
    if isinstance(op, Affine):
        return {"kind": "affine", "M": op.M.tolist(), "q": op.q.tolist()}
    if isinstance(op, NormalConeBox):
        return {"kind": "normal_cone_box", "lo": op.lo.tolist(), "hi": op.hi.tolist()}
    if isinstance(op, SubdiffAbsScaled):
        return {"kind": "subdiff_abs", "weight": op.weight.tolist()}
    if isinstance(op, Shifted):
        return {"kind": "shifted", "base": _op_to_dict(op.base), "shift": op.shift.tolist()}
    if isinstance(op, Scaled):
        return {"kind": "scaled", "base": _op_to_dict(op.base), "eta": op.eta}
    if isinstance(op, Zero):
        return {"kind": "zero", "n": op.n}
    raise ProblemError(f"cannot serialise {type(op).__name__}")


def problem_from_dict(d: dict) -> Problem:
    if not isinstance(d, dict) or "A" not in d or "B" not in d:
        raise ProblemError("a problem needs 'A' and 'B' entries")
    sols = None
    sd = d.get("solutions")
    if sd is not None:
        if "points" in sd:
            sols = PointSet(sd["points"])
        elif "box" in sd:
            lo = [float(v) for v in sd["box"]["lo"]]
            hi = [float(v) for v in sd["box"]["hi"]]
            sols = BoxSet(lo, hi)
        else:
            raise ProblemError("solutions need 'points' or 'box'")
    prob = Problem(str(d.get("name", "problem")), _op_from_dict(d["A"]), _op_from_dict(d["B"]), sols,
                   str(d.get("description", "")))
    if not check_declared_solutions(prob):
        raise ProblemError(f"{prob.name}: a declared solution is not in the extended solution set")
    return prob


def problem_to_dict(p: Problem) -> dict:
    d = {"name": p.name, "description": p.description, "A": _op_to_dict(p.A), "B": _op_to_dict(p.B)}
    if isinstance(p.solutions, PointSet):
        d["solutions"] = {"points": p.solutions.points.tolist()}
    elif isinstance(p.solutions, BoxSet):
        d["solutions"] = {"box": {"lo": p.solutions.lo.tolist(), "hi": p.solutions.hi.tolist()}}
    return d


def load_problem(ref: str) -> Problem:
    """``suite:<name>`` or a path to a YAML problem file."""
    if ref.startswith("suite:"):
        return get_problem(ref[len("suite:"):])
    with open(ref) as fh:
        return problem_from_dict(yaml.safe_load(fh))


def dump_problem(p: Problem, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(problem_to_dict(p), fh, sort_keys=False)


# ---------------------------------------------------------------- grid oracle

def _axis_grid(lo: float, hi: float, step: float, breaks: np.ndarray) -> np.ndarray:
    i0, i1 = int(np.floor(lo / step)), int(np.ceil(hi / step))
    g = np.arange(i0, i1 + 1) * step
    b = breaks[(breaks >= lo) & (breaks <= hi)]
    return np.unique(np.concatenate([g[(g >= lo - 1e-15) & (g <= hi + 1e-15)], b]))


def _lipschitz_total(problem: Problem) -> float:
    return problem.A.lipschitz() + problem.B.lipschitz()


def _scan(problem: Problem, axes: list[np.ndarray], step: float) -> tuple[np.ndarray, float]:
    n = problem.dim
    L = _lipschitz_total(problem)
    # a solution's nearest grid point (same piece, thanks to breakpoints) has residual <= L*step*sqrt(n)/2
    tol = max(1.0, L) * 0.5 * step * np.sqrt(n) * (1.0 + 1e-9) + 1e-12
    Z = np.array(list(itertools.product(*axes))) if n > 1 else axes[0][:, None]
    res = inclusion_residual(problem.A, problem.B, Z)
    return Z[res <= tol], tol


def brute_force_solution(problem: Problem, grid_radius: float, grid_step: float,
                         coarse_step: Optional[float] = None) -> list[BoxSet]:
    """Boxes in (z, w) space enclosing every solution with ``|z|_inf <= grid_radius``.

    A coarse scan locates candidate regions; a fine scan at ``grid_step``
    refines them.  Boxes are built from connected clusters of grid hits.
    """
    n = problem.dim
    if n > 2:
        raise ProblemError("brute_force_solution supports dimension <= 2")
    if not grid_step > 0 or not grid_radius > 0:
        raise ProblemError("grid_radius and grid_step must be positive")
    bps = [np.unique(np.concatenate([a, b])) for a, b in zip(problem.A.breakpoints(), problem.B.breakpoints())]
    H = coarse_step or max(grid_step, min(grid_radius / 50.0, 64 * grid_step))
    axes = [_axis_grid(-grid_radius, grid_radius, H, bps[i]) for i in range(n)]
    hits, _ = _scan(problem, axes, H)
    if hits.size == 0:
        return []
    if H > grid_step:
        fine_axes = []
        for i in range(n):
            centres = np.unique(hits[:, i])
            pieces = [_axis_grid(max(c - H, -grid_radius), min(c + H, grid_radius), grid_step, bps[i])
                      for c in centres]
            fine_axes.append(np.unique(np.concatenate(pieces)))
        hits, _ = _scan(problem, fine_axes, grid_step)
    if hits.size == 0:
        return []

    tree = cKDTree(hits)
    pairs = tree.query_pairs(r=1.5 * grid_step, p=np.inf, output_type="ndarray")
    m = hits.shape[0]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m)) if len(pairs) else \
        coo_matrix((m, m))
    ncomp, labels = connected_components(graph, directed=False)
    # a solution may sit up to half a tick gap (<= step) beyond its nearest hit
    pad = 0.5 * grid_step
    # w* = b(z*) with z* within r of a hit in the same piece: each side moves by at most L_op * r
    r = 0.5 * grid_step * np.sqrt(n) * (1.0 + 1e-9)
    la, lb = problem.A.lipschitz() * r, problem.B.lipschitz() * r
    alo, ahi = value_boxes(problem.A, hits)
    blo, bhi = value_boxes(problem.B, hits)
    wlo = np.maximum(blo - lb, -ahi - la) - 1e-12
    whi = np.minimum(bhi + lb, -alo + la) + 1e-12
    boxes = []
    for c in range(ncomp):
        idx = labels == c
        zlo, zhi = hits[idx].min(axis=0) - pad, hits[idx].max(axis=0) + pad
        boxes.append(BoxSet(np.concatenate([zlo, wlo[idx].min(axis=0)]),
                            np.concatenate([zhi, whi[idx].max(axis=0)])))
    return boxes


def boxes_contain(boxes: Sequence[BoxSet], s, tol: float = 0.0) -> bool:
    return any(b.contains(s, tol) for b in boxes)
