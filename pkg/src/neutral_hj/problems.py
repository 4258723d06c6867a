"""Registry of built-in problems with their independently known value functionals.

Problems are addressed by name plus a parameter map::

    prob = get_problem("neutral_linear_value", {"a": 0.5})
    phi = analytic_functional(prob)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import ProblemSpec, box_lattice, ci_derivative_g
from .value import CandidateFunctional


class UnknownProblem(KeyError):
    pass


@dataclass(frozen=True)
class Entry:
    build: Callable
    defaults: dict
    analytic: Callable | None = None
    description: str = ""
    s_vectors: Callable | None = None


REGISTRY: dict[str, Entry] = {}


def register(name, defaults, analytic=None, description="", s_vectors=None):
    """Decorator adding a ``build(params) -> ProblemSpec`` function to the registry."""
    def deco(build):
        REGISTRY[name] = Entry(build, dict(defaults), analytic, description, s_vectors)
        return build
    return deco


def problem_names():
    return sorted(REGISTRY)


def _merge(name, params):
    if name not in REGISTRY:
        raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(problem_names())}")
    entry = REGISTRY[name]
    params = dict(params or {})
    extra = set(params) - set(entry.defaults)
    if extra:
        raise ValueError(f"unknown parameters for {name}: {sorted(extra)}")
    merged = dict(entry.defaults)
    merged.update(params)
    return entry, merged


def get_problem(name, params=None):
    entry, merged = _merge(name, params)
    return entry.build(merged)


def analytic_functional(prob):
    """The closed-form value functional of a registered problem, or None."""
    entry = REGISTRY.get(prob.name)
    if entry is None or entry.analytic is None:
        return None
    return entry.analytic(prob)


def probe_vectors(prob):
    """Default s-samples for the verifier: 0, ±e_i and problem-specific vectors.

    s = 0 isolates the running cost, which the ball-shaped inclusion would
    otherwise swamp.
    """
    eye = np.eye(prob.n)
    out = [np.zeros(prob.n), *eye, *(-eye)]
    entry = REGISTRY.get(prob.name)
    if entry is not None and entry.s_vectors is not None:
        out.extend(np.atleast_1d(np.asarray(v, dtype=float)) for v in entry.s_vectors(prob))
    return [np.asarray(v, dtype=float) for v in out]


# ---------------------------------------------------------------------------
# broadcasting helpers for the callables
# ---------------------------------------------------------------------------

def _lead(*arrays):
    return np.broadcast_shapes(*(np.shape(a)[:-1] for a in arrays))


def _lead_t(t, *arrays):
    return np.broadcast_shapes(np.shape(t), *(np.shape(a)[:-1] for a in arrays))


def _constant_rate(vec):
    vec = np.asarray(vec, dtype=float)

    def f(t, z, r, u):
        return np.broadcast_to(vec, _lead_t(t, z, r, u) + vec.shape).copy()
    return f


def _zero_cost(t, z, r, u):
    return np.zeros(_lead_t(t, z, r, u))


def _scalar_g(a):
    def g(t, x):
        return a * np.asarray(x, dtype=float)

    def dg_dt(t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def grad_g(t, x):
        x = np.asarray(x, dtype=float)
        return a * np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],))
    return g, dg_dt, grad_g


def _sq(v):
    return float(v @ v)


def _vec(v, n, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise ValueError(f"parameter {name} must have length {n}")
    return v


# ---------------------------------------------------------------------------
# B1: delayless minimum norm
# ---------------------------------------------------------------------------

def _b1_value(prob):
    theta = prob.theta

    def phi(tau, z, w):
        return max(0.0, abs(float(z[0])) - (theta - tau))
    return CandidateFunctional(phi, name="delayless_min_norm:analytic")


@register("delayless_min_norm", {"h": 1.0, "I": 2, "levels": 3}, analytic=_b1_value,
          description="x' = u, u in a lattice on [-1, 1], σ = |z|")
def _b1(params):
    def f(t, z, r, u):
        return np.broadcast_to(u, _lead_t(t, z, r, u) + (1,)).copy()

    return ProblemSpec(
        n=1, m=1, h=float(params["h"]), I=int(params["I"]),
        control_set=box_lattice([-1.0], [1.0], [int(params["levels"])]),
        f=f, f0=_zero_cost,
        sigma=lambda z, w: float(abs(z[0])),
        sigma_batch=lambda zT, past: np.abs(zT[:, 0]),
        c_f=1.0, name="delayless_min_norm", params=dict(params))


# ---------------------------------------------------------------------------
# B2: pure transport
# ---------------------------------------------------------------------------

def _b2_value(prob):
    u0 = np.asarray(prob.params["u0"], dtype=float)
    theta = prob.theta

    def end(tau, z):
        return z + u0 * (theta - tau)

    return CandidateFunctional(
        lambda tau, z, w: _sq(end(tau, z)),
        ci_derivative=lambda tau, z, w: float(-2.0 * end(tau, z) @ u0),
        grad_z=lambda tau, z, w: 2.0 * end(tau, z),
        name="pure_transport:analytic")


@register("pure_transport", {"h": 1.0, "I": 2, "u0": [0.5, -0.25]}, analytic=_b2_value,
          description="x' = u0 with a single control, σ = ‖z‖²",
          s_vectors=lambda prob: [np.asarray(prob.params["u0"], dtype=float)])
def _b2(params):
    u0 = np.atleast_1d(np.asarray(params["u0"], dtype=float))
    n = u0.size
    return ProblemSpec(
        n=n, m=n, h=float(params["h"]), I=int(params["I"]), control_set=u0[None, :],
        f=_constant_rate(u0), f0=_zero_cost,
        sigma=lambda z, w: _sq(z),
        sigma_batch=lambda zT, past: np.einsum("bi,bi->b", zT, zT),
        c_f=max(float(np.linalg.norm(u0)), 1e-12),
        name="pure_transport", params={**params, "u0": u0.tolist()})


# ---------------------------------------------------------------------------
# B3: neutral, no control choice
# ---------------------------------------------------------------------------

def b3_state(prob, tau, z, w, t):
    """x(t) for B3 from the exact method-of-steps recursion.

    The reduced path is y(t) = z - a·w(-h) + u0 (t - τ) + b (t² - τ²)/2 and
    x(t) = y(t) + a·x(t - h).
    """
    a, u0, b = float(prob.params["a"]), float(prob.params["u0"]), float(prob.params["b"])
    h = prob.h
    y0 = float(z[0]) - a * float(w.at_start[0])
    tol = 1e-12 * max(1.0, tau)
    total = 0.0
    weight = 1.0
    s = float(t)
    while s >= tau - tol:
        s = max(s, tau)
        total += weight * (y0 + u0 * (s - tau) + 0.5 * b * (s * s - tau * tau))
        weight *= a
        s -= h
    return total + weight * float(w.eval(max(s - tau, -h))[0])


def _b3_value(prob):
    def phi(tau, z, w):
        if tau >= prob.theta:
            return prob.sigma(z, w)
        x = b3_state(prob, tau, z, w, prob.theta)
        return 0.5 * x * x
    return CandidateFunctional(phi, name="neutral_no_control:analytic")


@register("neutral_no_control", {"h": 1.0, "I": 2, "a": 0.5, "u0": 1.0, "b": 0.0},
          analytic=_b3_value,
          description="d/dt(x - a x(t-h)) = u0 + b t, single control, σ = z²/2")
def _b3(params):
    a, u0, b = float(params["a"]), float(params["u0"]), float(params["b"])
    g, dg_dt, grad_g = _scalar_g(a)

    def f(t, z, r, u):
        rate = (u0 + b * np.asarray(t, dtype=float))[..., None]
        return np.broadcast_to(rate, _lead_t(t, z, r, u) + (1,)).copy()

    return ProblemSpec(
        n=1, m=1, h=float(params["h"]), I=int(params["I"]), control_set=[[u0]],
        f=f, f0=_zero_cost, g=g, dg_dt=dg_dt, grad_g=grad_g,
        sigma=lambda z, w: 0.5 * float(z[0]) ** 2,
        sigma_batch=lambda zT, past: 0.5 * zT[:, 0] ** 2,
        c_f=max(abs(u0) + abs(b) * float(params["h"]) * int(params["I"]), 1e-12),
        name="neutral_no_control", params=dict(params))


# ---------------------------------------------------------------------------
# B4: neutral with a linear manufactured value
# ---------------------------------------------------------------------------

def _b4_value(prob):
    a = float(prob.params["a"])
    c = np.asarray(prob.params["c"], dtype=float)

    def phi(tau, z, w):
        return float(c @ (z - a * w.at_start))

    def ci(tau, z, w):
        return float(-c @ ci_derivative_g(prob, tau, w))

    return CandidateFunctional(phi, ci_derivative=ci, grad_z=lambda tau, z, w: c.copy(),
                               name="neutral_linear_value:analytic")


@register("neutral_linear_value", {"h": 1.0, "I": 2, "a": 0.5, "u0": [1.0, -0.5], "c": [1.0, 2.0]},
          analytic=_b4_value,
          description="d/dt(x - a x(t-h)) = u0, f⁰ = -⟨u0, c⟩, σ = ⟨c, z - a w(-h)⟩",
          s_vectors=lambda prob: [np.asarray(prob.params["c"], dtype=float)])
def _b4(params):
    a = float(params["a"])
    u0 = np.atleast_1d(np.asarray(params["u0"], dtype=float))
    c = _vec(params["c"], u0.size, "c")
    n = u0.size
    g, dg_dt, grad_g = _scalar_g(a)
    rate = -float(u0 @ c)
    h, I = float(params["h"]), int(params["I"])
    theta = h * I

    def f0(t, z, r, u):
        return np.full(_lead_t(t, z, r, u), rate)

    return ProblemSpec(
        n=n, m=n, h=h, I=I, control_set=u0[None, :],
        f=_constant_rate(u0), f0=f0, g=g, dg_dt=dg_dt, grad_g=grad_g,
        sigma=lambda z, w: float(c @ (z - a * w.at_start)),
        sigma_batch=lambda zT, past: (zT - a * past([theta - h])[:, 0]) @ c,
        c_f=max(float(np.linalg.norm(u0)), 1e-12),
        name="neutral_linear_value", params={**params, "u0": u0.tolist(), "c": c.tolist()})


# ---------------------------------------------------------------------------
# manufactured pair with g ≡ 0 and a running-integral value
# ---------------------------------------------------------------------------

def _ri_value(prob):
    d = np.asarray(prob.params["d"], dtype=float)
    return CandidateFunctional(
        lambda tau, z, w: float(d @ w.integral()),
        ci_derivative=lambda tau, z, w: float(d @ z - d @ w.at_start),
        grad_z=lambda tau, z, w: np.zeros_like(z),
        name="running_integral:analytic")


@register("running_integral", {"h": 1.0, "I": 2, "d": [1.0, -0.5]}, analytic=_ri_value,
          description="x' = 0, f⁰ = ⟨d, r - z⟩, σ = ∫⟨d, w⟩; value ∫⟨d, w⟩")
def _running_integral(params):
    d = np.atleast_1d(np.asarray(params["d"], dtype=float))
    n = d.size

    def f0(t, z, r, u):
        return (np.asarray(r) - np.asarray(z)) @ d + np.zeros(_lead_t(t, z, r, u))

    return ProblemSpec(
        n=n, m=1, h=float(params["h"]), I=int(params["I"]), control_set=[[0.0]],
        f=lambda t, z, r, u: np.zeros(_lead_t(t, z, r, u) + (n,)), f0=f0,
        sigma=lambda z, w: float(d @ w.integral()),
        c_f=1.0, name="running_integral", params={**params, "d": d.tolist()})


# ---------------------------------------------------------------------------
# problems with planted violations
# ---------------------------------------------------------------------------

def _crc_value(prob):
    theta = prob.theta
    return CandidateFunctional(lambda tau, z, w: theta - tau,
                               ci_derivative=lambda tau, z, w: -1.0,
                               grad_z=lambda tau, z, w: np.zeros_like(z),
                               name="constant_running_cost:analytic")


@register("constant_running_cost", {"h": 1.0, "I": 2, "n": 1}, analytic=_crc_value,
          description="x' = 0, f⁰ = 1, σ = 0; value ϑ - τ")
def _constant_running_cost(params):
    n = int(params["n"])
    return ProblemSpec(
        n=n, m=1, h=float(params["h"]), I=int(params["I"]), control_set=[[0.0]],
        f=lambda t, z, r, u: np.zeros(_lead_t(t, z, r, u) + (n,)),
        f0=lambda t, z, r, u: np.ones(_lead_t(t, z, r, u)),
        sigma=lambda z, w: 0.0, sigma_batch=lambda zT, past: np.zeros(zT.shape[0]),
        c_f=1.0, name="constant_running_cost", params=dict(params))


def _zero_value(prob):
    return CandidateFunctional(lambda tau, z, w: 0.0, ci_derivative=lambda tau, z, w: 0.0,
                               grad_z=lambda tau, z, w: np.zeros_like(z),
                               name=f"{prob.name}:analytic")


@register("zero_hamiltonian", {"h": 1.0, "I": 2, "n": 1}, analytic=_zero_value,
          description="x' = 0, f⁰ = 0, σ = 0; H ≡ 0")
def _zero_hamiltonian(params):
    n = int(params["n"])
    return ProblemSpec(
        n=n, m=1, h=float(params["h"]), I=int(params["I"]), control_set=[[0.0]],
        f=lambda t, z, r, u: np.zeros(_lead_t(t, z, r, u) + (n,)), f0=_zero_cost,
        sigma=lambda z, w: 0.0, sigma_batch=lambda zT, past: np.zeros(zT.shape[0]),
        c_f=1.0, name="zero_hamiltonian", params=dict(params))


@register("box_control", {"h": 1.0, "I": 2, "m": 2, "levels": 3}, analytic=_zero_value,
          description="x' = u on a lattice of [-1, 1]^m, f⁰ = 0, σ = 0")
def _box_control(params):
    m = int(params["m"])
    U = box_lattice(-np.ones(m), np.ones(m), [int(params["levels"])] * m)

    def f(t, z, r, u):
        return np.broadcast_to(u, _lead_t(t, z, r, u) + (m,)).copy()

    return ProblemSpec(
        n=m, m=m, h=float(params["h"]), I=int(params["I"]), control_set=U,
        f=f, f0=_zero_cost, sigma=lambda z, w: 0.0,
        sigma_batch=lambda zT, past: np.zeros(zT.shape[0]),
        c_f=math.sqrt(m), name="box_control", params=dict(params))
