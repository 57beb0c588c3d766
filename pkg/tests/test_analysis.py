import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from projsplit.analysis import (CertificateError, RunConstants, Variant, certificate, check_iteration, check_rates,
                                check_trace_iterations, distance_to_solution, ergodic_count_bound, noise_floor_index,
                                pointwise_count_bound, psm_theta, rounding_floor, upsilon, upsilon_prime)
from projsplit.engine import StopCriterion, band_rho, constant_rho, run
from projsplit.problems import get_problem, p1
from projsplit.separator import IterateState
from projsplit.splitting import band_a123, constant_schedule, psm_oracle, spingarn_oracle

import oracles

ZERO1 = IterateState([0.0], [0.0])


def test_certificate_examples():
    c = certificate(Variant.EXACT_PSM, lam=1.0, mu=1.0, alpha=0.0)
    assert (c.delta_param, c.theta) == (2.0, 1.0)
    assert c.xi is None and c.tau is None
    assert certificate(Variant.PARALLEL_INEXACT, lam=2.0, mu=0.5).xi == 0.5
    c = certificate(Variant.SEQUENTIAL_INEXACT, lam=1.0)
    assert c.tau == 1.0 and c.theta is None and c.alpha == 1.0


def test_certificate_errors():
    with pytest.raises(CertificateError):
        certificate(Variant.EXACT_PSM, lam=1.0, mu=1.0, alpha=2.0)
    with pytest.raises(CertificateError):
        certificate(Variant.EXACT_PSM, lam=-1.0, mu=1.0)
    with pytest.raises(CertificateError):
        certificate(Variant.PARALLEL_INEXACT, lam=1.0, mu=1.0, alpha=0.5)
    with pytest.raises(CertificateError):
        certificate(Variant.SEQUENTIAL_INEXACT, lam=1.0, mu=2.0)
    with pytest.raises(ValueError):
        certificate("nonsense", lam=1.0, mu=1.0)


@given(lam=st.floats(0.01, 20), mu=st.floats(0.01, 20), frac=st.floats(-0.999, 0.999))
def test_theta_matches_eigenvalue_oracle(lam, mu, frac):
    alpha = frac * 2 * math.sqrt(mu / lam)
    th = psm_theta(lam, mu, alpha)
    ref = oracles.theta_eig(lam, mu, alpha)
    assert th > 0
    assert th == pytest.approx(ref, rel=1e-9, abs=1e-13 * (1 + lam * mu))
    c = certificate(Variant.EXACT_PSM, lam=lam, mu=mu, alpha=alpha)
    assert c.delta_param == pytest.approx(mu + (1 - alpha) * lam) and c.delta_param > 0


def test_upsilon_examples():
    u, inv = upsilon(1.0, 1.0, 1.0)
    assert u == 8.0 and inv == 0.125
    c = certificate(Variant.EXACT_PSM, lam=1.0, mu=1.0)
    assert c.theta / c.delta_param == 0.5 >= inv
    assert upsilon(1.0, 1.0, 2.0)[0] == 4.0
    with pytest.raises(CertificateError):
        upsilon(2.0, 1.0, 1.0)


@given(lo=st.floats(0.05, 5), span=st.floats(0, 5), nu=st.floats(0.01, 1))
def test_upsilon_formula(lo, span, nu):
    hi = lo + span
    assert upsilon(lo, hi, nu)[0] == pytest.approx(oracles.upsilon_formula(lo, hi, nu), rel=1e-13)
    assert upsilon(lo, hi, 2 * nu)[0] == pytest.approx(upsilon(lo, hi, nu)[0] / 2, rel=1e-13)


@given(lo=st.floats(0.1, 3), span=st.floats(0, 3), amax=st.floats(0, 0.9), k=st.integers(1, 200))
def test_theta_over_delta_lower_bound(lo, span, amax, k):
    hi = lo + span
    sched = band_a123(lo, hi, amax * math.sqrt(lo / hi))
    p = sched(k)
    c = certificate(Variant.EXACT_PSM, lam=p.lam, mu=p.mu, alpha=p.alpha)
    assert c.theta / c.delta_param >= upsilon(lo, hi, sched.nu)[1] * (1 - 1e-12)


def _p1_trace(n=1, oracle=None, rho=1.0, **kw):
    prob = p1()
    oracle = oracle or psm_oracle(prob.A, prob.B, constant_schedule())
    return run(oracle, ZERO1, rho, StopCriterion(0, 0), n, **kw)[0]


def test_check_iteration_first_psm_step_is_tight():
    rec = _p1_trace().records[0]
    assert rec.phi == 1.0 and rec.grad_norm_sq == 2.0
    rep = check_iteration(rec, d0=math.sqrt(2.0), ops=(p1().A, p1().B), cumulative=0.5, s0=ZERO1)
    assert rep.ok
    td = next(c for c in rep.checks if c.name == "lemma.theta_delta")
    assert td.observed == td.bound == 1.0


def test_check_iteration_spingarn_gamma():
    prob = p1()
    trace = _p1_trace(20, spingarn_oracle(prob.A, prob.B, 1.0))
    for rec in trace.records:
        rep = check_iteration(rec)
        assert rep.ok
        info = [c for c in rep.checks if c.name == "spingarn.gamma_half_ulps"]
        if rec.grad_norm_sq > 0:
            assert info and info[0].informational and info[0].ok and rec.gamma == 0.5


def test_check_iteration_flags_rho_and_missing_certificate():
    rec = _p1_trace().records[0]
    rep = check_iteration(replace(rec, rho=2.5))
    assert not rep.ok and rep.failures()[0].name == "rho.in_range"
    with pytest.raises(CertificateError):
        check_iteration(replace(rec, certificate=None))


def test_check_iteration_detects_a_broken_lemma():
    rec = _p1_trace().records[0]
    # claim a larger theta than the parameters allow: the lower bound on phi must now fail
    bad = replace(rec, certificate=replace(rec.certificate, theta=4.0))
    assert "lemma.theta_delta" in [c.name for c in check_iteration(bad).failures()]


def test_distance_examples():
    prob = p1()
    assert distance_to_solution(prob, ZERO1) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    assert distance_to_solution(prob, IterateState([1.0], [-1.0])) == 0.0
    scaled = replace(prob, solutions=prob.scaled_solutions(2.0))
    assert distance_to_solution(scaled, ZERO1) == pytest.approx(math.sqrt(5.0), rel=1e-15)
    with pytest.raises(CertificateError):
        distance_to_solution(replace(prob, solutions=None), ZERO1)


def test_rates_on_p1_psm_at_k_100():
    prob = p1()
    sched = constant_schedule()
    trace = _p1_trace(100, psm_oracle(prob.A, prob.B, sched))
    consts = RunConstants(sched.lam_lo, sched.lam_hi, sched.nu, 0.0)
    rep = check_rates(trace, math.sqrt(2.0), constants=consts)
    assert rep.info["mode"] == "a123" and rep.info["upsilon"] == 8.0
    assert rep.satisfied, [c for c in rep.summary() if not c["satisfied"]]
    # P1 converges linearly; the run hits the rounding floor or stops exactly well before k = 100
    assert rep.info.get("noise_floor_k") or rep.info.get("exact_k")


def test_rates_first_ergodic_term():
    prob = p1()
    trace = _p1_trace(1, psm_oracle(prob.A, prob.B, constant_schedule()), rho=1.5)
    rep = check_rates(trace, math.sqrt(2.0), mode="general")
    ab = rep.get("ergodic.ab")
    rec = trace.records[0]
    assert ab.observed[0] == np.linalg.norm(rec.xtriple.value + rec.ytriple.value)
    assert trace.records[0].ergodic[2] == 1.5 * rec.gamma
    assert ab.bound[0] == 2 * math.sqrt(2.0) / (1.5 * rec.gamma)
    assert rep.satisfied


@pytest.mark.parametrize("eta", [1.0, 2.0])
def test_spingarn_rates_use_scaled_distance(eta):
    prob = get_problem("p2-n10")
    trace, _ = run(spingarn_oracle(prob.A, prob.B, eta), IterateState.zeros(10), band_rho(0.5),
                   StopCriterion(1e-10, 1e-10), 5000)
    d0 = prob.scaled_solutions(eta).distance(np.zeros(20))
    rep = check_rates(trace, d0, constants=RunConstants(1.0, 1.0, 1.0, 0.5))
    names = {c.theorem for c in rep.checks}
    assert {"spingarn.pointwise", "spingarn.ergodic.ab", "spingarn.P_lower", "spingarn.ergodic.eps"} <= names
    assert rep.satisfied, [c for c in rep.summary() if not c["satisfied"]]
    # a d0 that is far too small must be caught
    assert not check_rates(trace, 1e-3 * d0, constants=RunConstants(1.0, 1.0, 1.0, 0.5)).satisfied


def test_exact_termination_prefix_is_checked():
    prob = get_problem("p5")
    trace, term = run(psm_oracle(prob.A, prob.B, constant_schedule()), IterateState.zeros(1), 1.0,
                      StopCriterion(0, 0), 100)
    assert term.kind == "exact"
    rep = check_rates(trace, prob.solutions.distance(np.zeros(2)), mode="general")
    assert rep.info["exact_k"] == term.k
    assert rep.info["iterations"] == term.k - 1
    assert rep.satisfied


def test_noise_floor_detection():
    prob = get_problem("p2-n2")
    trace, _ = run(psm_oracle(prob.A, prob.B, constant_schedule()), IterateState.zeros(2), 1.0,
                   StopCriterion(0, 0), 400)
    kf = noise_floor_index(trace)
    assert 0 < kf < len(trace)
    for r in trace.records[:kf]:
        assert r.phi > rounding_floor(r)
    rep = check_rates(trace, prob.solutions.distance(np.zeros(4)), mode="general")
    assert rep.info["noise_floor_k"] == trace.records[kf].k
    assert rep.satisfied


def test_lemmas_over_a_whole_trace():
    prob = get_problem("p3-n5")
    trace, _ = run(psm_oracle(prob.A, prob.B, band_a123(0.5, 2.0, 0.5)), IterateState.zeros(5), band_rho(0.5),
                   StopCriterion(1e-10, 1e-10), 3000)
    d0 = prob.solutions.distance(np.zeros(10))
    reps = check_trace_iterations(trace, d0, ops=(prob.A, prob.B))
    assert all(r.ok for r in reps)
    assert not any(r.ok for r in check_trace_iterations(trace, 1e-6 * d0)[5:])


def test_count_bounds():
    assert pointwise_count_bound(1.0, 8.0, 0.0, 0.5) == 256
    d0, lo, hi, nu, rb = 2.0, 0.5, 2.0, 0.1875, 0.5
    ups = upsilon(lo, hi, nu)[0]
    for delta, eps in ((1e-2, 1e-2), (1e-3, 1e-1), (1e-1, 1e-4)):
        K = ergodic_count_bound(d0, lo, hi, nu, rb, delta, eps)
        for k in (K, K + 1, 10 * K):
            assert 2 * d0 * ups / (k * (1 - rb)) <= delta * (1 + 1e-12)
            up = upsilon_prime(lo, hi, nu, rb, k)
            assert d0 ** 2 * ups * (up + 4) / (k * (1 - rb)) <= eps * (1 + 1e-12)
        k = K - 1
        up = upsilon_prime(lo, hi, nu, rb, k)
        assert (2 * d0 * ups / (k * (1 - rb)) > delta) or (d0 ** 2 * ups * (up + 4) / (k * (1 - rb)) > eps)


def test_report_json_round_trip():
    prob = p1()
    trace = _p1_trace(30, psm_oracle(prob.A, prob.B, constant_schedule(0.7, 1.2, 0.3)), rho=constant_rho(1.4))
    rep = check_rates(trace, math.sqrt(2.0), mode="general")
    data = json.loads(rep.to_json())
    assert data["variant"] == "psm"
    rec = data["records"][0]
    assert set(rec) == {"theorem", "k", "bound", "observed", "satisfied", "slack"}
    assert all(r["satisfied"] for r in data["records"])
    assert {s["theorem"] for s in data["summary"]} == {c.theorem for c in rep.checks}


def test_check_rates_rejects_bad_mode():
    prob = p1()
    trace = _p1_trace(5, psm_oracle(prob.A, prob.B, constant_schedule(0.7, 1.2, 0.3)), rho=1.2)
    with pytest.raises(ValueError):
        check_rates(trace, 1.0, mode="fast")
    with pytest.raises(ValueError):
        check_rates(trace, 1.0, mode="a123")
