import numpy as np
import pytest
from hypothesis import given, strategies as st

from projsplit.operators import EnlargementTriple, resolvent
from projsplit.problems import suite
from projsplit.separator import (DegenerateSeparatorError, IterateState, ParameterError, build_separator,
                                 evaluate, gamma, relax_project)

import oracles
from oracles import vectors

T = EnlargementTriple


def one_d():
    return build_separator(T([1.0], [-1.0]), T([0.0], [0.0]))


def rewritten(sep, s):
    x, b, ex = sep.xtriple.point, sep.xtriple.value, sep.xtriple.eps
    y, a, ey = sep.ytriple.point, sep.ytriple.value, sep.ytriple.eps
    return (s.z - y) @ (a + b) + (s.w - b) @ (x - y) - ex - ey


def test_build_examples():
    x, b = np.array([0.3, -1.0]), np.array([2.0, 0.5])
    sep = build_separator(T(x, b), T(x, -b))
    assert sep.is_flat()
    assert evaluate(sep, IterateState([4.0, 1.0], [-3.0, 2.0])) == 0.0

    sep = one_d()
    np.testing.assert_array_equal(sep.grad_z, [-1.0]); np.testing.assert_array_equal(sep.grad_w, [1.0])


@given(x=vectors(2), b=vectors(2), y=vectors(2), a=vectors(2))
def test_value_at_x_b(x, b, y, a):
    sep = build_separator(T(x, b), T(y, a))
    assert evaluate(sep, IterateState(x, b)) == pytest.approx((x - y) @ (a + b), rel=1e-12, abs=1e-12)


def test_build_dimension_mismatch():
    with pytest.raises(ValueError):
        build_separator(T([1.0], [1.0]), T([1.0, 2.0], [1.0, 2.0]))


def test_evaluate_examples():
    flat = build_separator(T([1.0], [2.0]), T([1.0], [-2.0]))
    assert evaluate(flat, IterateState([5.0], [-7.0])) == 0.0
    assert evaluate(one_d(), IterateState([0.0], [0.0])) == 1.0
    assert evaluate(one_d(), IterateState([1.0], [-1.0])) == -1.0


def test_gamma_examples():
    assert gamma(one_d(), IterateState([1.0], [-1.0])) == 0.0
    assert gamma(one_d(), IterateState([0.0], [0.0])) == 0.5
    # a separator with phi = 3 and |grad phi|^2 = 1.5 at s
    sep = build_separator(T([0.0], [0.0]), T([-np.sqrt(0.5)], [1.0]))
    s = IterateState([3.0 - np.sqrt(0.5)], [0.0])
    assert sep.grad_norm_sq == pytest.approx(1.5, rel=1e-15)
    assert evaluate(sep, s) == pytest.approx(3.0, rel=1e-15)
    assert gamma(sep, s) == pytest.approx(2.0, rel=1e-14)


def test_gamma_degenerate_raises():
    sep = build_separator(T([1.0], [1.0]), T([1.0], [-1.0]))
    assert sep.is_flat()
    assert gamma(sep, IterateState([0.0], [0.0])) == 0.0
    # valid triples cannot give phi > 0 on a flat separator; a negative eps simulates a broken upstream triple
    object.__setattr__(sep.xtriple, "eps", -1.0)
    with pytest.raises(DegenerateSeparatorError):
        gamma(sep, IterateState([0.0], [0.0]))


def test_relax_project_examples():
    s = IterateState([1.0], [-1.0])
    assert relax_project(one_d(), s, 1.7) is s
    s0 = IterateState([0.0], [0.0])
    s1 = relax_project(one_d(), s0, 1.0)
    np.testing.assert_array_equal(s1.z, [0.5]); np.testing.assert_array_equal(s1.w, [-0.5])
    s2 = relax_project(one_d(), s0, 2.0 - 1e-15)
    np.testing.assert_allclose(s2.z, [1.0]); np.testing.assert_allclose(s2.w, [-1.0])
    p = s1.stacked()
    assert np.linalg.norm(s0.stacked() - p) == pytest.approx(np.linalg.norm(s2.stacked() - p), rel=1e-12)


@pytest.mark.parametrize("rho", [0.0, 2.0, -0.5, 2.5])
def test_relax_project_rejects_rho(rho):
    with pytest.raises(ParameterError):
        relax_project(one_d(), IterateState([0.0], [0.0]), rho)


# ---------------------------------------------------------------- properties

triples = st.tuples(vectors(3), vectors(3), st.floats(0, 5))


@given(xt=triples, yt=triples, z=vectors(3), w=vectors(3))
def test_definition_and_rewritten_forms_agree(xt, yt, z, w):
    sep = build_separator(T(*xt), T(*yt))
    s = IterateState(z, w)
    d, r = evaluate(sep, s), rewritten(sep, s)
    mag = 1 + abs(d) + np.abs(np.concatenate([z, w, xt[0], xt[1], yt[0], yt[1]])).max() ** 2
    assert abs(d - r) <= 1e-10 * mag
    # the affine form grad . s + offset is a third route
    assert abs(sep.grad_z @ z + sep.grad_w @ w + sep.offset - d) <= 1e-10 * mag


@given(xt=triples, yt=triples, z=vectors(3), w=vectors(3))
def test_gradient_recomputes_from_triples(xt, yt, z, w):
    sep = build_separator(T(*xt), T(*yt))
    np.testing.assert_array_equal(sep.grad_z, yt[1] + xt[1])
    np.testing.assert_array_equal(sep.grad_w, xt[0] - yt[0])


@given(xt=triples, yt=triples, z=vectors(3), w=vectors(3))
def test_projection_is_nearest_point_of_halfspace(xt, yt, z, w):
    sep = build_separator(T(*xt), T(*yt))
    s = IterateState(z, w)
    phi = evaluate(sep, s)
    if phi <= 0 or sep.grad_norm_sq < 1e-6:
        return
    out = relax_project(sep, s, 1.0)
    g = np.concatenate([sep.grad_z, sep.grad_w])
    ref = oracles.halfspace_projection(g, sep.offset, s.stacked())
    scale = max(1.0, np.abs(s.stacked()).max(), abs(phi) / np.sqrt(sep.grad_norm_sq))
    np.testing.assert_allclose(out.stacked(), ref, atol=1e-9 * scale)
    assert abs(evaluate(sep, out)) <= 1e-9 * (1 + sep.grad_norm_sq) * scale ** 2


@pytest.mark.parametrize("problem", suite(), ids=lambda p: p.name)
def test_solutions_lie_in_generated_halfspaces(problem, rng):
    n = problem.dim
    sols = problem.solutions.sample()
    for _ in range(50):
        lam, mu = rng.uniform(0.2, 3, 2)
        u = rng.normal(size=n) * 3
        x, b = resolvent(problem.B, lam, u)
        y, a = resolvent(problem.A, mu, rng.normal(size=n) * 3)
        sep = build_separator(T(x, b), T(y, a))
        for p in sols:
            val = evaluate(sep, IterateState(p[:n], p[n:]))
            assert val <= 1e-10 * max(1.0, np.abs(p).max() * max(np.abs(x).max(), np.abs(b).max(), 1.0))
