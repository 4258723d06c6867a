import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from neutral_hj import (DomainError, History, NotInPLipStar, PathPoint, extend_constant, mollify, norms,
                        right_derivative_at_start, shift, upsilon)
from neutral_hj.dynamics import ControlSignal, integrate_control
from neutral_hj.histories import Trajectory, mollified_derivative, random_history
from neutral_hj.problems import get_problem

seeds = st.integers(0, 2 ** 31 - 1)


def step_history():
    return History.step(1.0, [-0.5], [[-1.0], [1.0]])


# -- norms -------------------------------------------------------------------

def test_norms_constant():
    c = np.array([3.0, -4.0])
    assert norms(History.constant(1.0, c)) == pytest.approx((5.0, 5.0), abs=1e-15)


def test_norms_identity():
    w = History.linear(1.0, [1.0])
    assert norms(w) == pytest.approx((0.5, 1.0), abs=1e-15)


def test_norms_step():
    assert norms(step_history()) == pytest.approx((1.0, 1.0), abs=1e-15)


@given(seeds)
def test_l1_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    w = random_history(rng, 1.0, 2, 1.5)
    pts = [float(s) for s in w.starts[1:]]
    ref = quad(lambda x: np.linalg.norm(w.eval(x)), -1.0, -1e-15, points=pts or None,
               limit=400, epsabs=1e-12)[0]
    assert w.l1 == pytest.approx(ref, abs=1e-8)


@given(seeds, st.floats(0.2, 3.0))
def test_l1_bounded_by_h_sup(seed, h):
    rng = np.random.default_rng(seed)
    w = random_history(rng, h, 2, 2.0)
    l1, sup = w.norms()
    assert l1 <= h * sup * (1 + 1e-12)


# -- evaluation ----------------------------------------------------------------

def test_eval_constant_both_sides():
    w = History.constant(1.0, [2.0])
    assert w.eval(-0.3)[0] == 2.0
    assert w.eval(-0.3, "left")[0] == 2.0


def test_eval_breakpoint_semantics():
    w = step_history()
    assert w.eval(-0.5)[0] == 1.0
    assert w.eval(-0.5, "left")[0] == -1.0


def test_eval_left_limit_at_zero():
    w = History.linear(1.0, [1.0])
    assert w.eval(0.0, "left")[0] == 0.0
    assert w.left_end[0] == 0.0


@pytest.mark.parametrize("xi,side", [(0.0, "right"), (-1.5, "right"), (-1.0, "left"), (0.1, "left")])
def test_eval_out_of_domain(xi, side):
    with pytest.raises(DomainError):
        step_history().eval(xi, side)


def test_invalid_segments_rejected():
    with pytest.raises(ValueError):
        History(1.0, [(-0.9, [[0.0]])])
    with pytest.raises(ValueError):
        History(1.0, [(-1.0, [[0.0]]), (-1.0, [[1.0]])])


# -- serialization -------------------------------------------------------------

@given(seeds)
def test_json_round_trip(seed):
    w = random_history(np.random.default_rng(seed), 1.0, 2, 1.0)
    back = History.from_json(w.to_json())
    assert back.to_json() == w.to_json()
    assert back.delta_w == w.delta_w
    for s0, s1 in zip(w.samples, back.samples):
        assert np.array_equal(s0, s1)


# -- shift and constant extension -------------------------------------------------

def test_shift_zero_is_identity():
    w = History.linear(1.0, [2.0], 0.5)
    x = extend_constant(PathPoint(0.3, w.left_end, w), 2.0)
    assert shift(x, 0.3) is w


def test_shift_constant_path():
    w = History.constant(1.0, [1.5])
    x = extend_constant(PathPoint(0.2, [1.5], w), 2.0)
    s = shift(x, 1.1)
    assert s.jumps().size == 0
    assert np.allclose(s.eval_many(np.linspace(-1, -1e-9, 11)), 1.5, atol=1e-15)


def test_shift_half_interval_matches_pointwise():
    prob = get_problem("pure_transport")
    w = History.linear(1.0, [1.0, -1.0])
    p = PathPoint(0.0, w.left_end, w)
    x = integrate_control(prob, p, ControlSignal.constant(0.0, prob.theta, prob.control_set[0]), 8)
    hs = shift(x, 0.5)
    for xi in np.linspace(-1.0, -0.01, 23):
        assert np.allclose(hs.eval(xi), x.eval(0.5 + xi), atol=1e-14)


def test_shift_junction_breakpoint_only_for_jump():
    w = History.constant(1.0, [1.0])
    smooth = shift(extend_constant(PathPoint(0.0, [1.0], w), 2.0), 0.4)
    jumpy = shift(extend_constant(PathPoint(0.0, [2.0], w), 2.0), 0.4)
    assert smooth.jumps().size == 0
    assert np.allclose(jumpy.jumps(), [-0.4])


def test_shift_preserves_history_breakpoints():
    w = step_history()
    s = shift(extend_constant(PathPoint(0.0, [1.0], w), 2.0), 0.25)
    assert np.allclose(s.jumps(), [-0.75])


def test_shift_outside_domain():
    w = History.constant(1.0, [0.0])
    x = extend_constant(PathPoint(0.5, [0.0], w), 2.0)
    with pytest.raises(DomainError):
        shift(x, 0.4)
    with pytest.raises(DomainError):
        shift(x, 2.5)


def test_extend_constant_end_value():
    w = step_history()
    p = PathPoint(0.3, [0.7], w)
    x = extend_constant(p, 2.0)
    assert x.eval(2.0)[0] == 0.7
    assert np.allclose(shift(x, 1.3).eval_many(np.linspace(-1, -1e-9, 7)), 0.7, atol=1e-15)


@given(seeds, st.floats(0.0, 0.9), st.integers(1, 16))
def test_shift_of_constant_extension(seed, tau, k):
    rng = np.random.default_rng(seed)
    w = random_history(rng, 1.0, 1, 1.0)
    z = rng.uniform(-1, 1, size=1)
    x = extend_constant(PathPoint(tau, z, w), 2.0)
    t = tau + k / 16.0
    s = shift(x, t)
    for xi in np.linspace(-1.0, -1e-6, 17):
        if abs(xi - (tau - t)) < 1e-9:
            continue
        want = z if xi >= tau - t else w.eval(t + xi - tau)
        assert np.allclose(s.eval(xi), want, atol=1e-12)


def test_kappa_l1_continuity():
    rng = np.random.default_rng(0)
    w = random_history(rng, 1.0, 2, 1.0)
    x = extend_constant(PathPoint(0.2, [0.5, -0.5], w), 2.0)
    base = shift(x, 0.7)
    gaps = [(shift(x, 0.7 + d) - base).l1 for d in (0.1, 0.01, 0.001, 1e-4)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3


# -- upsilon ---------------------------------------------------------------------

def test_upsilon_constant():
    c = np.array([0.6, 0.8])
    z = np.array([2.0, 0.0])
    assert upsilon(0.5, z, History.constant(1.0, c)) == pytest.approx(2.0 + 3.0, abs=1e-14)


def test_upsilon_boundary_index():
    w = History.linear(1.0, [1.0], 0.5)
    z = np.array([0.25])
    want = 0.25 + w.l1 + 2 * abs(w.at_start[0])
    assert upsilon(1.0, z, w) == pytest.approx(want, abs=1e-14)
    assert upsilon(0.0, z, w) == pytest.approx(want, abs=1e-14)


def test_upsilon_step_uses_right_value():
    w = History.step(1.0, [-0.5], [[-1.0], [3.0]])
    assert upsilon(0.5, np.zeros(1), w) == pytest.approx(0.0 + w.l1 + 1.0 + 3.0, abs=1e-14)


def test_upsilon_zero():
    assert upsilon(0.7, np.zeros(2), History.constant(1.0, [0.0, 0.0])) == 0.0


@given(seeds, st.floats(0.0, 2.0), st.floats(-3.0, 3.0))
def test_upsilon_absolutely_homogeneous(seed, tau, lam):
    rng = np.random.default_rng(seed)
    w = random_history(rng, 1.0, 2, 1.0)
    z = rng.normal(size=2)
    lhs = upsilon(tau, lam * z, w.scale(lam))
    assert lhs == pytest.approx(abs(lam) * upsilon(tau, z, w), rel=1e-12, abs=1e-12)


# -- mollification --------------------------------------------------------------------

@pytest.mark.parametrize("j", [1, 4, 32])
def test_mollify_constant(j):
    w = History.constant(1.0, [0.3, -0.2])
    wj = mollify([0.3, -0.2], w, j)
    assert np.allclose(wj.samples[0], [0.3, -0.2], atol=1e-12)
    assert wj.delta_w > 0


def test_mollify_step_convergence():
    w = step_history()
    gaps = [(w - mollify([1.0], w, j)).l1 for j in (4, 8, 16, 32, 64)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05 * w.l1


@given(seeds, st.sampled_from([1, 3, 8, 20]))
def test_mollify_sup_bound(seed, j):
    rng = np.random.default_rng(seed)
    w = random_history(rng, 1.0, 2, 1.0)
    z = rng.uniform(-1.5, 1.5, size=2)
    bound = max(float(np.linalg.norm(z)), w.sup)
    assert mollify(z, w, j).sup <= bound + 1e-9


def test_mollify_gamma_limits():
    w = History(1.0, [(-1.0, [[0.0], [1.0]]), (-0.4, [[-0.5], [0.2]])])
    z = np.array([0.8])
    cont = [-0.9, -0.7, -0.2, -0.1]
    prev = None
    for j in (8, 32, 128):
        wj = mollify(z, w, j)
        errs = ((w - wj).l1, abs(z[0] - wj.left_end[0]),
                max(abs(w.eval(x)[0] - wj.eval(x)[0]) for x in cont))
        if prev is not None:
            assert all(e <= pe + 1e-12 for e, pe in zip(errs, prev))
        prev = errs
    assert max(prev) < 0.05


def test_mollify_jump_at_zero_approaches_z():
    w = History.constant(1.0, [0.0])
    vals = [mollify([1.0], w, j).left_end[0] for j in (4, 16, 64)]
    assert vals == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)


def test_mollify_rejects_bad_j():
    with pytest.raises(ValueError):
        mollify([0.0], step_history(), 0)


# -- right derivative at -h -------------------------------------------------------------

def test_right_derivative_linear():
    assert right_derivative_at_start(History.linear(1.0, [2.5, -1.0])) == pytest.approx([2.5, -1.0])


def test_right_derivative_constant():
    assert right_derivative_at_start(History.constant(1.0, [4.0]))[0] == 0.0


def test_right_derivative_of_mollified_step_matches_fd():
    w = History.step(1.0, [-0.97], [[-1.0], [1.0]])
    wj = mollify([1.0], w, 16, num=16001)
    d = right_derivative_at_start(wj)[0]
    fd = (wj.samples[0][1, 0] - wj.samples[0][0, 0]) / (1.0 / 16000)
    assert d == pytest.approx(fd, abs=5e-3 * max(1.0, abs(d)))
    assert d == pytest.approx(mollified_derivative([1.0], w, 16, [-1.0])[0, 0], abs=1e-12)


def test_right_derivative_requires_certification():
    w = History(1.0, [(-1.0, [[0.0], [1.0], [0.0]])])
    assert w.delta_w > 0
    with pytest.raises(NotInPLipStar):
        right_derivative_at_start(History(1.0, [(-1.0, [[0.0], [1.0]])], delta_w=0.0))


# -- path points and trajectories ---------------------------------------------------------

def test_interior_flag():
    w = History.linear(1.0, [1.0])
    assert PathPoint(0.5, [0.0], w).interior_flag
    assert not PathPoint(1.0, [0.0], w).interior_flag
    assert not PathPoint(0.5, [0.0], History(1.0, [(-1.0, [[0.0], [1.0]])], delta_w=0.0)).interior_flag


def test_trajectory_prefix_property():
    w = History.linear(1.0, [1.0], 0.2)
    p = PathPoint(0.3, [0.9], w)
    x = extend_constant(p, 2.0)
    assert isinstance(x, Trajectory)
    assert x.eval(0.3)[0] == 0.9
    assert x.eval(0.3, "left")[0] == pytest.approx(0.2)
    assert x.eval(-0.2)[0] == pytest.approx(w.eval(-0.5)[0])
