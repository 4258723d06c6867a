import math

import numpy as np
import pytest

from neutral_hj import CandidateFunctional, DomainError, History, PathPoint, estimate_constants, integrate_control
from neutral_hj.dynamics import ControlSignal
from neutral_hj.problems import analytic_functional, get_problem, probe_vectors
from neutral_hj.value import numeric_value_functional, random_g_star_point
from neutral_hj.verifier import (ContractError, MovableStepSampler, ParameterError, check_dini, check_dpp,
                                 check_phi2, check_residual, check_subsuper, check_terminal,
                                 directional_derivative, gamma_for, hj_residual, nu_diagnostic, nu_value,
                                 run_suite, summary_table, theta_value)


def g_star(prob, seed=0):
    return random_g_star_point(np.random.default_rng(seed), prob)


def zero_functional():
    return CandidateFunctional(lambda tau, z, w: 0.0, ci_derivative=lambda tau, z, w: 0.0,
                               grad_z=lambda tau, z, w: np.zeros_like(z), name="zero")


# -- terminal --------------------------------------------------------------------------

def test_terminal_exact_for_analytic():
    prob = get_problem("neutral_linear_value")
    rep = check_terminal(prob, analytic_functional(prob), samples=50)
    assert rep.slack == 0.0 and rep.passed


def test_terminal_offset_detected():
    prob = get_problem("pure_transport")
    base = analytic_functional(prob)
    off = CandidateFunctional(lambda tau, z, w: base(tau, z, w) + 0.1, name="offset")
    rep = check_terminal(prob, off, samples=20)
    assert rep.slack == pytest.approx(-0.1, abs=1e-12)
    assert not rep.passed


# -- DPP -------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["pure_transport", "neutral_linear_value"])
def test_dpp_passes_on_true_values(name):
    prob = get_problem(name)
    phi = analytic_functional(prob)
    for seed in range(3):
        p = g_star(prob, seed)
        rep = check_dpp(prob, phi, p, min(prob.theta, p.tau + 0.4), probe_vectors(prob), selections=4)
        assert rep.passed, rep.details


def test_dpp_planted_violation():
    prob = get_problem("constant_running_cost")
    p = g_star(prob, 1)
    t = p.tau + 0.3
    rep = check_dpp(prob, zero_functional(), p, t, probe_vectors(prob), selections=4)
    assert rep.slack <= -(t - p.tau) + 1e-12
    assert not rep.passed
    assert rep.details["note"] == "no witness in budget"


def test_dpp_time_order():
    prob = get_problem("zero_hamiltonian")
    p = g_star(prob)
    with pytest.raises(DomainError):
        check_dpp(prob, zero_functional(), p, p.tau, [np.ones(1)])


def test_dpp_restricted_mode():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    w = History.linear(1.0, [0.2, -0.1], [0.3, 0.5])
    p = PathPoint(0.3, w.left_end, w)
    rep = check_dpp(prob, phi, p, 0.8, probe_vectors(prob), eta=0.5, selections=4, restricted=True)
    assert rep.check == "dpp_restricted" and rep.passed
    with pytest.raises(DomainError):
        check_dpp(prob, phi, p, 1.2, probe_vectors(prob), restricted=True)
    stepped = PathPoint(0.3, [0.0, 0.0], History.step(1.0, [-0.5], [[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(DomainError):
        check_dpp(prob, phi, stepped, 0.8, probe_vectors(prob), restricted=True)


# -- directional derivatives and Dini --------------------------------------------------------

def test_directional_derivative_pure_transport():
    prob = get_problem("pure_transport")
    phi = analytic_functional(prob)
    u0 = np.array(prob.params["u0"])
    p = g_star(prob, 2)
    end = p.z + u0 * (prob.theta - p.tau)
    for l in (np.zeros(2), np.array([1.0, 0.5]), -u0):
        want = 2 * end @ (l - u0)
        for side in ("lower", "upper"):
            assert directional_derivative(phi, p, l, side) == pytest.approx(want, abs=5e-3)


def test_directional_derivative_b4_is_linear_in_l():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    c = np.array(prob.params["c"])
    p = g_star(prob, 3)
    ci = phi.ci_derivative(p.tau, p.z, p.w)
    for l in (np.zeros(2), np.array([0.3, -1.0])):
        assert directional_derivative(phi, p, l) == pytest.approx(ci + c @ l, abs=1e-6)


def test_directional_derivative_arguments():
    prob = get_problem("pure_transport")
    phi = analytic_functional(prob)
    p = g_star(prob)
    with pytest.raises(ValueError):
        directional_derivative(phi, p, [0.0, 0.0], side="middle")
    with pytest.raises(ValueError):
        directional_derivative(phi, p, [0.0, 0.0], steps=[0.01, 0.1])
    with pytest.raises(DomainError):
        directional_derivative(phi, PathPoint(2.0, p.z, p.w), [0.0, 0.0], theta=2.0)


def test_dini_true_value_and_planted():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    for seed in range(3):
        assert check_dini(prob, phi, g_star(prob, seed), probe_vectors(prob)).passed
    crc = get_problem("constant_running_cost")
    rep = check_dini(crc, zero_functional(), g_star(crc), probe_vectors(crc))
    assert rep.slack <= -10 * rep.tolerance


def test_dini_constant_on_zero_hamiltonian():
    prob = get_problem("zero_hamiltonian", {"n": 2})
    const = CandidateFunctional(lambda tau, z, w: 3.0, name="const")
    assert check_dini(prob, const, g_star(prob), probe_vectors(prob)).passed


def test_dini_needs_g_star_point():
    prob = get_problem("neutral_linear_value")
    p = g_star(prob)
    with pytest.raises(DomainError):
        check_dini(prob, analytic_functional(prob), PathPoint(1.0, p.z, p.w), probe_vectors(prob))


# -- sub/superdifferentials ------------------------------------------------------------------

def test_subsuper_b4():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    p = g_star(prob, 4)
    ci = phi.ci_derivative(p.tau, p.z, p.w)
    c = np.array(prob.params["c"])
    rep = check_subsuper(prob, phi, p, [(ci, c, "sub"), (ci, c, "super"), (ci - 1, c, "sub"), (ci + 1, c, "sub")])
    rows = rep.details["candidates"]
    assert [r["member"] for r in rows] == [True, True, True, False]
    assert rep.passed
    # a lowered time component is a genuine subgradient with strictly negative inequality expression
    assert rows[2]["inequality_slack"] == pytest.approx(1.0, abs=1e-9)


def test_subsuper_planted():
    prob = get_problem("constant_running_cost")
    rep = check_subsuper(prob, zero_functional(), g_star(prob))
    assert rep.slack == pytest.approx(-1.0)
    assert not rep.passed


def test_subsuper_candidate_kind():
    prob = get_problem("neutral_linear_value")
    with pytest.raises(ValueError):
        check_subsuper(prob, analytic_functional(prob), g_star(prob), [(0.0, [0.0, 0.0], "both")])


def test_subsuper_fd_candidates_for_numeric_functional():
    prob = get_problem("neutral_linear_value")
    phi = numeric_value_functional(prob, k=1, steps=8)
    rep = check_subsuper(prob, phi, g_star(prob, 5), tol=1e-2)
    assert rep.details["members"] >= 1


# -- residual ------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["neutral_linear_value", "running_integral"])
def test_residual_passes(name):
    prob = get_problem(name)
    pts = [g_star(prob, s) for s in range(5)]
    rep = check_residual(prob, analytic_functional(prob), pts)
    assert rep.passed and rep.slack >= -1e-12


def test_residual_linear_candidate_on_b1():
    prob = get_problem("delayless_min_norm")
    c = 2.0
    lin = CandidateFunctional(lambda tau, z, w: c * float(z[0]), ci_derivative=lambda tau, z, w: 0.0,
                              grad_z=lambda tau, z, w: np.array([c]), name="linear")
    assert hj_residual(prob, lin, g_star(prob)) == pytest.approx(-abs(c))
    assert not check_residual(prob, lin, [g_star(prob)]).passed


def test_residual_contract():
    prob = get_problem("delayless_min_norm")
    with pytest.raises(ContractError):
        hj_residual(prob, analytic_functional(prob), g_star(prob))


# -- (φ2) --------------------------------------------------------------------------------------

def test_phi2_constant():
    prob = get_problem("zero_hamiltonian")
    rep = check_phi2(prob, CandidateFunctional(lambda tau, z, w: 1.0), 1.0, pairs=50)
    assert rep.details["lambda_hat"] == 0.0 and rep.passed


def test_phi2_b4_bound():
    prob = get_problem("neutral_linear_value")
    rep = check_phi2(prob, analytic_functional(prob), 1.0, pairs=200)
    bound = np.linalg.norm(prob.params["c"]) * max(1.0, abs(prob.params["a"]))
    assert rep.details["lambda_hat_doubled"] <= bound * (1 + 1e-12)
    assert rep.passed


def test_phi2_rejects_point_evaluation():
    prob = get_problem("zero_hamiltonian")
    probe = CandidateFunctional(lambda tau, z, w: float(w.eval(-0.5)[0]), name="point_eval")
    rep = check_phi2(prob, probe, 1.0, pairs=50, pair_sampler=MovableStepSampler(prob, 1.0))
    assert not rep.passed
    shrink = rep.details["shrink_ratios"]
    assert shrink[-1] > 10 * shrink[0]


def test_phi2_pair_count():
    prob = get_problem("zero_hamiltonian")
    with pytest.raises(ValueError):
        check_phi2(prob, zero_functional(), 1.0, pairs=1)


# -- ν -------------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def b3_consts():
    prob = get_problem("neutral_no_control")
    return prob, estimate_constants(prob, 2.0, samples=128, seed=0)


def test_theta_at_zero(b3_consts):
    prob, consts = b3_consts
    gamma = 0.1
    assert theta_value(consts, 2.0, gamma, prob.h, 0.0) == pytest.approx((1 - gamma) / gamma)


def test_nu_at_origin(b3_consts):
    prob, consts = b3_consts
    gamma, eps, tau = gamma_for(consts, 2.0, prob.h, prob.theta), 0.1, 0.7
    got = nu_value(consts, 2.0, gamma, eps, prob.h, tau, [0.0], History.constant(1.0, [0.0]))
    assert got == pytest.approx(theta_value(consts, 2.0, gamma, prob.h, tau) * eps ** 2)


def test_nu_identical_trajectories(b3_consts):
    prob, consts = b3_consts
    gamma = gamma_for(consts, 2.0, prob.h, prob.theta)
    w = History.linear(1.0, [0.3], 0.2)
    x = integrate_control(prob, PathPoint(0.0, w.left_end, w), ControlSignal.constant(0.0, 2.0, [1.0]), 16)
    lhs, rhs = nu_diagnostic(consts, 2.0, gamma, 0.1, prob, x, x, 0.2, 1.4)
    # only the ε² regularizer moves, through θ
    drift = 0.1 ** 2 * (theta_value(consts, 2.0, gamma, prob.h, 1.4) - theta_value(consts, 2.0, gamma, prob.h, 0.2))
    assert lhs == pytest.approx(drift, rel=1e-12)
    assert rhs == 0.0


def test_nu_gamma_too_large(b3_consts):
    prob, consts = b3_consts
    w = History.constant(1.0, [0.0])
    x = integrate_control(prob, PathPoint(0.0, [0.0], w), ControlSignal.constant(0.0, 2.0, [1.0]), 8)
    with pytest.raises(ParameterError):
        nu_diagnostic(consts, 2.0, 0.9, 0.1, prob, x, x, 0.2, 1.0)


def test_gamma_for_keeps_theta_above_one(b3_consts):
    prob, consts = b3_consts
    gamma = gamma_for(consts, 2.0, prob.h, prob.theta)
    assert theta_value(consts, 2.0, gamma, prob.h, prob.theta) == pytest.approx(3.0)
    assert math.isfinite(gamma) and gamma > 0


# -- reports and the suite ------------------------------------------------------------------------

def test_report_json_deterministic():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    p = g_star(prob, 6)
    a = check_dini(prob, phi, p, probe_vectors(prob), seed=3).to_json()
    b = check_dini(prob, phi, p, probe_vectors(prob), seed=3).to_json()
    assert a == b


def test_run_suite_b4_passes_and_threads_agree():
    prob = get_problem("neutral_linear_value")
    phi = analytic_functional(prob)
    serial = run_suite(prob, phi, points=2, selections=2, phi2_pairs=50)
    threaded = run_suite(prob, phi, points=2, selections=2, phi2_pairs=50, jobs=3)
    assert all(r.passed for r in serial)
    assert [r.to_json() for r in serial] == [r.to_json() for r in threaded]
    table = summary_table(serial)
    assert table.splitlines()[-1] == f"{len(serial)}/{len(serial)} checks passed"
