import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from projsplit.operators import Affine, NormalConeBox, Shifted, SubdiffAbsScaled, Zero
from projsplit.problems import (BoxSet, PointSet, Problem, ProblemError, affine_pair, boxes_contain,
                                brute_force_solution, check_declared_solutions, dump_problem, get_problem,
                                inclusion_residual, load_problem, p1, p3, p4, p5, problem_from_dict, solve_box_vi,
                                solve_lasso, suite)

import oracles

SUITE = suite()


def test_suite_contents():
    names = [p.name for p in SUITE]
    assert names == ["p1", "p2-n2", "p2-n10", "p2-n50", "p3-n2", "p3-n5", "p4-n1", "p4-n5", "p5"]
    for p in SUITE:
        assert p.solutions is not None
        assert check_declared_solutions(p)


def test_p1_solution():
    np.testing.assert_array_equal(p1().solutions.points, [[1.0, -1.0]])


def test_p2_hand_example():
    prob = affine_pair(np.eye(2), [0.0, 0.0], np.eye(2), [-2.0, 0.0])
    np.testing.assert_allclose(prob.solutions.points[0], [1.0, 0.0, -1.0, 0.0], atol=1e-15)


def test_p2_structure():
    for n, seed in ((2, 11), (10, 12), (50, 13)):
        prob = get_problem(f"p2-n{n}")
        assert prob.seed == seed
        assert np.linalg.eigvalsh(prob.A.M).min() >= -1e-12
        assert np.linalg.eigvalsh(prob.A.M + prob.B.M).min() > 0
        z, w = prob.solutions.points[0][:n], prob.solutions.points[0][n:]
        # independent: normal equations through lstsq
        z_ref = np.linalg.lstsq(prob.A.M + prob.B.M, -(prob.A.q + prob.B.q), rcond=None)[0]
        np.testing.assert_allclose(z, z_ref, atol=1e-10)
        np.testing.assert_allclose(w, prob.B.M @ z + prob.B.q, atol=1e-10)
        np.testing.assert_allclose(-w, prob.A.M @ z + prob.A.q, atol=1e-9)


def test_suite_is_reproducible():
    a, b = suite(), suite()
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.solutions.sample(), pb.solutions.sample())


def test_p3_interior_sanity():
    M = np.array([[2.0, 0.5], [0.5, 1.0]]); q = np.array([0.2, -0.3])
    z = solve_box_vi(M, q, -np.ones(2), np.ones(2))
    np.testing.assert_allclose(M @ z + q, 0.0, atol=1e-14)
    assert np.all(np.abs(z) < 1)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 4))
def test_box_vi_fixed_point(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    M = G @ G.T / n + 0.5 * np.eye(n)
    q = 3 * rng.normal(size=n)
    z = solve_box_vi(M, q, -np.ones(n), np.ones(n))
    ref = oracles.box_projection(-np.ones(n), np.ones(n), z - (M @ z + q))
    np.testing.assert_allclose(z, ref, atol=1e-9)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 4))
def test_lasso_optimality(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    M = G @ G.T / n + np.eye(n)
    q = 2 * rng.normal(size=n)
    wt = rng.uniform(0.2, 1.5, n)
    z = solve_lasso(M, q, wt)
    g = M @ z + q
    # z is a fixed point of the proximal gradient map (soft-threshold as the independent prox)
    step = 0.5 / np.linalg.norm(M, 2)
    u = z - step * g
    prox = np.array([oracles.soft_threshold_scalar(wt[i], step, u[i]) for i in range(n)])
    np.testing.assert_allclose(z, prox, atol=1e-10)


def test_p4_one_d_solution_is_a_single_point():
    # 0 in sign(z) + z - 2 only at z = 1, so S_e = {(1, -1)}
    prob = p4(1, 0)
    np.testing.assert_allclose(prob.solutions.points, [[1.0, -1.0]])
    zs = np.linspace(-5, 5, 100001)
    res = inclusion_residual(prob.A, prob.B, zs[:, None])
    assert zs[res <= 1e-12].tolist() == [1.0]
    boxes = brute_force_solution(prob, 5.0, 1e-3)
    assert len(boxes) == 1 and boxes_contain(boxes, [1.0, -1.0])
    assert not boxes_contain(boxes, [2.0, 0.0]) and not boxes_contain(boxes, [3.0, 1.0])


def test_brute_force_p1():
    boxes = brute_force_solution(p1(), 3.0, 1e-3)
    assert len(boxes) == 1
    b = boxes[0]
    assert b.contains([1.0, -1.0])
    assert np.all(b.width() <= 2e-3 * (1 + 1e-9))


def test_brute_force_empty():
    prob = Problem("none", Shifted(Zero(1), [1.0]), Shifted(Zero(1), [1.0]))
    assert brute_force_solution(prob, 5.0, 1e-2) == []
    prob2 = Problem("none2", Shifted(Zero(2), [1.0, 0.0]), Shifted(Zero(2), [1.0, 0.0]))
    assert brute_force_solution(prob2, 2.0, 1e-2) == []


def test_brute_force_rejects_large_dimension():
    with pytest.raises(ProblemError):
        brute_force_solution(get_problem("p3-n5"), 1.0, 1e-2)
    with pytest.raises(ProblemError):
        brute_force_solution(p1(), 1.0, 0.0)


@pytest.mark.parametrize("problem", [p for p in SUITE if p.dim <= 2], ids=lambda p: p.name)
def test_brute_force_boxes_cover_declared_solutions(problem):
    boxes = brute_force_solution(problem, 10.0, 1e-3)
    assert boxes
    for s in problem.solutions.sample():
        if np.all(np.abs(s[:problem.dim]) <= 10.0):
            assert boxes_contain(boxes, s)


def test_brute_force_interval_solution_set():
    prob = p5()
    boxes = brute_force_solution(prob, 3.0, 1e-3)
    for z in (0.0, 0.5, 1.7, 3.0):
        assert boxes_contain(boxes, [z, -1.0])
    assert not boxes_contain(boxes, [-0.1, -1.0])


def test_box_vi_2d_brute_force_matches():
    prob = p3(2, 21)
    boxes = brute_force_solution(prob, 2.0, 1e-3)
    assert boxes_contain(boxes, prob.solutions.points[0])


def test_solution_sets():
    ps = PointSet([[1.0, -1.0], [3.0, 0.0]])
    assert ps.distance([1.0, -1.0]) == 0.0 and ps.distance([3.0, 1.0]) == 1.0
    np.testing.assert_array_equal(ps.scaled(2.0).points, [[1.0, -2.0], [3.0, 0.0]])
    bs = BoxSet([0.0, -1.0], [np.inf, -1.0])
    assert bs.distance([5.0, -1.0]) == 0.0 and bs.distance([-3.0, 3.0]) == 5.0
    assert bs.max_distance([0.0, 0.0]) == np.inf
    assert BoxSet([0.0, 0.0], [1.0, 2.0]).max_distance([0.0, 0.0]) == pytest.approx(np.sqrt(5.0))
    with pytest.raises(ProblemError):
        BoxSet([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ProblemError):
        PointSet([[1.0, 2.0, 3.0]])


def test_problem_file_round_trip(tmp_path):
    for prob in SUITE:
        path = tmp_path / f"{prob.name}.yaml"
        dump_problem(prob, path)
        back = load_problem(str(path))
        assert back.name == prob.name
        pts = prob.solutions.sample()
        np.testing.assert_array_equal(back.solutions.sample(), pts)
        Z = np.random.default_rng(0).normal(size=(20, prob.dim))
        np.testing.assert_array_equal(inclusion_residual(back.A, back.B, Z), inclusion_residual(prob.A, prob.B, Z))


def test_problem_file_nested_kinds(tmp_path):
    doc = {"name": "nested",
           "A": {"kind": "scaled", "eta": 2.0, "base": {"kind": "shifted", "shift": [1.0],
                                                      "base": {"kind": "subdiff_abs", "weight": [0.5]}}},
           "B": {"kind": "normal_cone_box", "lo": [-1.0], "hi": [1.0]},
           "solutions": {"points": [[-1.0, -1.0]]}}
    path = tmp_path / "n.yaml"
    path.write_text(yaml.safe_dump(doc))
    prob = load_problem(str(path))
    assert isinstance(prob.A.base, Shifted) and isinstance(prob.B, NormalConeBox)


@pytest.mark.parametrize("doc", [
    {"A": {"kind": "affine", "M": [[1.0]], "q": [0.0]}},
    {"A": {"kind": "blob"}, "B": {"kind": "zero", "n": 1}},
    {"A": {"kind": "affine", "M": [[1.0]]}, "B": {"kind": "zero", "n": 1}},
    {"A": {"kind": "affine", "M": [[-1.0]], "q": [0.0]}, "B": {"kind": "zero", "n": 1}},
    {"A": {"kind": "zero", "n": 1}, "B": {"kind": "zero", "n": 1}, "solutions": {"points": [[1.0, 1.0]]}},
    {"A": {"kind": "zero", "n": 1}, "B": {"kind": "zero", "n": 1}, "solutions": {"ball": 1}},
    {"A": {"kind": "zero", "n": 1}, "B": {"kind": "zero", "n": 2}},
])
def test_problem_file_errors(doc):
    with pytest.raises(ProblemError):
        problem_from_dict(doc)


def test_unknown_suite_name():
    with pytest.raises(ProblemError):
        get_problem("p9")


def test_declared_solution_check_catches_wrong_points():
    prob = Problem("bad", Affine([[1.0]], [0.0]), Affine([[1.0]], [-2.0]), PointSet([[1.0, 1.0]]))
    assert not check_declared_solutions(prob)
    good = Problem("abs", SubdiffAbsScaled([1.0]), Affine([[0.0]], [-1.0]), BoxSet([0.0, -1.0], [4.0, -1.0]))
    assert check_declared_solutions(good)
