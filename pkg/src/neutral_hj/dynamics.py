"""Neutral-type controlled dynamics in Hale's form and the associated
differential inclusion, integrated by the method of steps on the reduced
path y(t) = x(t) - g(t, x(t-h)).

Callables in a :class:`ProblemSpec` follow numpy broadcasting: ``f(t, z, r, u)``
takes ``z, r`` of shape ``(..., n)`` and ``u`` of shape ``(..., m)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .histories import DomainError, NotInPLipStar, PathPoint, Trajectory, right_derivative_at_start


class NumericError(ArithmeticError):
    """Non-finite value produced while evaluating the dynamics."""


def _zero_g(t, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _zero_grad_g(t, x):
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape + (x.shape[-1],))


def box_lattice(lower, upper, counts):
    """Uniform per-axis lattice (endpoints included), lexicographic order."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    counts = np.broadcast_to(np.atleast_1d(np.asarray(counts, dtype=int)), lower.shape)
    if np.any(counts < 1):
        raise ValueError("each axis needs at least one lattice point")
    axes = [np.array([lo]) if c == 1 else np.linspace(lo, hi, c)
            for lo, hi, c in zip(lower, upper, counts)]
    return np.array(list(itertools.product(*axes)), dtype=float)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    n: int
    m: int
    h: float
    I: int
    control_set: np.ndarray
    f: Callable
    f0: Callable
    sigma: Callable
    g: Callable = _zero_g
    dg_dt: Callable = _zero_g
    grad_g: Callable = _zero_grad_g
    c_f: float | None = None
    sigma_batch: Callable | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    check_seed: int = 0

    def __post_init__(self):
        if not (self.h > 0 and int(self.I) >= 1):
            raise ValueError("need h > 0 and I >= 1")
        object.__setattr__(self, "I", int(self.I))
        U = np.asarray(self.control_set, dtype=float)
        if U.ndim == 1:
            U = U.reshape(-1, self.m)
        if U.ndim != 2 or U.shape[0] == 0 or U.shape[1] != self.m:
            raise ValueError("control_set must be a nonempty (L, m) array")
        U = U.copy()
        U.setflags(write=False)
        object.__setattr__(self, "control_set", U)
        self.check_derivatives()

    @property
    def theta(self):
        """Terminal time ϑ = I·h."""
        return self.I * self.h

    @property
    def control_mesh(self):
        """Largest gap between neighbouring lattice values along any axis."""
        U = self.control_set
        mesh = 0.0
        for i in range(self.m):
            vals = np.unique(U[:, i])
            if vals.size > 1:
                mesh = max(mesh, float(np.max(np.diff(vals))))
        return mesh

    def check_derivatives(self, points=8, tol=1e-5):
        """Compare dg_dt and grad_g with central differences of g."""
        rng = np.random.default_rng(self.check_seed)
        eps = 1e-6
        for _ in range(points):
            t = rng.uniform(eps, self.theta - eps)
            x = rng.normal(size=self.n)
            dt_fd = (np.asarray(self.g(t + eps, x)) - np.asarray(self.g(t - eps, x))) / (2 * eps)
            if not np.allclose(dt_fd, self.dg_dt(t, x), atol=tol, rtol=tol):
                raise ValueError(f"dg_dt disagrees with finite differences of g at t={t:.4g}")
            J = np.asarray(self.grad_g(t, x))
            for i in range(self.n):
                e = np.zeros(self.n)
                e[i] = eps
                col = (np.asarray(self.g(t, x + e)) - np.asarray(self.g(t, x - e))) / (2 * eps)
                if not np.allclose(col, J[:, i], atol=tol, rtol=tol):
                    raise ValueError(f"grad_g disagrees with finite differences of g at t={t:.4g}")

    def point(self, tau, z, w):
        if w.h != self.h or w.n != self.n:
            raise ValueError("history does not match the problem's h or n")
        if tau > self.theta + 1e-12:
            raise DomainError("τ exceeds ϑ")
        return PathPoint(tau, z, w)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Piecewise-constant control: ``values[i]`` on [grid[i], grid[i+1])."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or grid.size != values.shape[0] + 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("control grid must be increasing with len(values)+1 nodes")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, tau, theta, u):
        return cls(np.array([tau, theta]), np.atleast_2d(np.asarray(u, dtype=float)))

    @classmethod
    def uniform(cls, tau, theta, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return cls(np.linspace(tau, theta, values.shape[0] + 1), values)

    def at(self, t):
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return self.values[min(max(i, 0), self.values.shape[0] - 1)]


@dataclass(frozen=True)
class Selection:
    """A rule picking y-velocities from the ball F^η(x, x(t-h))."""

    kind: str = "zero"
    vector: np.ndarray | None = None
    seed: int = 0
    eta: float = 0.0
    policy: Callable | None = None
    pieces: int = 4

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "extremal", "random", "policy"):
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("η must lie in [0, 1]")
        if self.kind in ("constant", "extremal") and self.vector is None:
            raise ValueError(f"{self.kind} selection needs a vector")
        if self.kind == "policy" and self.policy is None:
            raise ValueError("policy selection needs a callable")

    @classmethod
    def zero(cls, eta=0.0):
        return cls("zero", eta=eta)

    @classmethod
    def constant(cls, l, eta=0.0):
        return cls("constant", vector=np.atleast_1d(np.asarray(l, dtype=float)), eta=eta)

    @classmethod
    def extremal(cls, s, eta=0.0):
        return cls("extremal", vector=np.atleast_1d(np.asarray(s, dtype=float)), eta=eta)

    @classmethod
    def random(cls, seed, eta=0.0, pieces=4):
        return cls("random", seed=int(seed), eta=eta, pieces=pieces)

    @classmethod
    def from_policy(cls, fn, eta=0.0):
        return cls("policy", policy=fn, eta=eta)

    def describe(self):
        out = {"kind": self.kind, "eta": self.eta}
        if self.vector is not None:
            out["vector"] = np.asarray(self.vector).tolist()
        if self.kind == "random":
            out["seed"] = self.seed
            out["pieces"] = self.pieces
        return out


@dataclass(frozen=True)
class Bounds:
    alpha_X: float
    alpha_X_star: float
    lambda_X_star: float


def ball_radius(x, y, eta, c_H):
    """c_H (1 + ‖x‖ + ‖y‖) + η."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return c_H * (1.0 + np.linalg.norm(x, axis=-1) + np.linalg.norm(y, axis=-1)) + eta


# ---------------------------------------------------------------------------
# grid construction and the batched method-of-steps core
# ---------------------------------------------------------------------------

KNOT_ALIGN_FACTOR = 4


def build_grid(prob, p, steps_per_interval, extra=(), end=None):
    """Integration grid on [τ, end] aligned with multiples of h, τ + kh,
    shifted history breakpoints and the given extra nodes."""
    if steps_per_interval < 1:
        raise ValueError("steps_per_interval must be >= 1")
    tau, h = p.tau, prob.h
    end = prob.theta if end is None else float(end)
    w = p.w
    knots = w.knots()
    if knots.size > KNOT_ALIGN_FACTOR * steps_per_interval + 2:
        knots = np.concatenate([[-h], w.breakpoints, [0.0]])
    events = [tau, end]
    events += [k * h for k in range(int(math.floor(end / h)) + 1)]
    kmax = int(math.ceil((end - tau) / h)) + 1
    for k in range(kmax):
        events.append(tau + k * h)
        events.extend(tau + h + knots + k * h)
    events.extend(extra)
    ev = np.array(sorted(e for e in events if tau <= e <= end))
    # merge events closer than a rounding-level tolerance
    tol = 1e-11 * max(1.0, end)
    merged = [ev[0]]
    for e in ev[1:]:
        if e - merged[-1] > tol:
            merged.append(e)
    merged[-1] = end
    merged[0] = tau
    dt = h / steps_per_interval
    nodes = [merged[0]]
    for lo, hi in zip(merged[:-1], merged[1:]):
        cells = max(1, int(math.ceil((hi - lo) / dt - 1e-9)))
        nodes.extend(lo + (hi - lo) * np.arange(1, cells + 1) / cells)
        nodes[-1] = hi
    return np.array(nodes)


def _delay_tables(grid, tau, h):
    """For each node, where x(t_k - h) comes from."""
    K = grid.size
    td = grid - h
    in_hist = td < tau - 1e-11 * max(1.0, h)
    idx = np.zeros(K, dtype=int)
    frac = np.zeros(K)
    exact = np.zeros(K, dtype=bool)
    for k in np.nonzero(~in_hist)[0]:
        j = int(np.searchsorted(grid, td[k], side="right")) - 1
        j = max(j, 0)
        if abs(grid[j] - td[k]) <= 1e-11 * max(1.0, abs(td[k])):
            exact[k] = True
        elif j + 1 < K and abs(grid[j + 1] - td[k]) <= 1e-11 * max(1.0, abs(td[k])):
            j += 1
            exact[k] = True
        else:
            frac[k] = (td[k] - grid[j]) / (grid[j + 1] - grid[j])
        idx[k] = j
    return in_hist, idx, frac, exact


def integrate_batch(prob, p, grid, rate, batch=1):
    """Euler on y for a batch of trajectories sharing the origin and grid.

    ``rate(k, t, x, xd)`` returns the y-velocity on [t_k, t_{k+1}) with x and
    xd of shape (batch, n).  Returns arrays X, L, Y of shape (batch, K, n):
    right values, left limits, and the reduced path.
    """
    tau, h, n = p.tau, prob.h, prob.n
    K = grid.size
    w = p.w
    in_hist, idx, frac, exact = _delay_tables(grid, tau, h)
    X = np.empty((batch, K, n))
    L = np.empty((batch, K, n))
    Y = np.empty((batch, K, n))
    hist_right = {}
    hist_left = {}
    for k in np.nonzero(in_hist)[0]:
        xi = max(grid[k] - h - tau, -h)
        hist_right[k] = w.eval(xi)
        hist_left[k] = w.eval(xi, "left") if xi > -h else w.eval(xi)
    # x(t - h) at t = τ + h sits exactly on τ: right value z, left value w(-0)

    def delayed(k):
        if in_hist[k]:
            r = np.broadcast_to(hist_right[k], (batch, n))
            return r, np.broadcast_to(hist_left[k], (batch, n))
        j = idx[k]
        if exact[k]:
            return X[:, j], L[:, j]
        v = (1.0 - frac[k]) * X[:, j] + frac[k] * L[:, j + 1]
        return v, v

    z = np.broadcast_to(p.z, (batch, n))
    xd, _ = delayed(0)
    Y[:, 0] = z - prob.g(grid[0], xd)
    X[:, 0] = z
    L[:, 0] = w.left_end
    for k in range(K - 1):
        t = grid[k]
        xd, _ = delayed(k)
        v = np.asarray(rate(k, t, X[:, k], xd), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite dynamics at t={t:.6g}")
        Y[:, k + 1] = Y[:, k] + (grid[k + 1] - t) * v
        xr, xl = delayed(k + 1)
        X[:, k + 1] = Y[:, k + 1] + prob.g(grid[k + 1], xr)
        L[:, k + 1] = Y[:, k + 1] + prob.g(grid[k + 1], xl)
        if not (np.all(np.isfinite(X[:, k + 1])) and np.all(np.isfinite(L[:, k + 1]))):
            raise NumericError(f"non-finite state at t={grid[k + 1]:.6g}")
    return X, L, Y


def _control_index(grid, ctrl_grid):
    seg = np.searchsorted(ctrl_grid, grid[:-1] + 1e-12 * np.maximum(1.0, np.abs(grid[:-1])), side="right") - 1
    return np.clip(seg, 0, ctrl_grid.size - 2)


def integrate_control(prob, p, u, steps_per_interval):
    """Trajectory driven by the piecewise-constant control ``u``."""
    tau = p.tau
    if u.grid[0] > tau + 1e-12 or u.grid[-1] < prob.theta - 1e-12:
        raise DomainError("control must cover [τ, ϑ]")
    if tau >= prob.theta:
        raise DomainError("cannot integrate from τ = ϑ")
    inner = u.grid[(u.grid > tau) & (u.grid < prob.theta)]
    grid = build_grid(prob, p, steps_per_interval, extra=inner)
    seg = _control_index(grid, u.grid)

    def rate(k, t, x, xd):
        return prob.f(t, x, xd, u.values[seg[k]][None, :])

    X, L, Y = integrate_batch(prob, p, grid, rate)
    return Trajectory(p, grid, X[0], L[0], Y[0], meta={"steps_per_interval": steps_per_interval})


def integrate_controls_batch(prob, p, ctrl_grid, controls, steps_per_interval, grid=None):
    """Integrate many control sequences (indices into the lattice) at once.

    ``controls`` has shape (B, k); returns grid, X, L, Y and the per-step
    control values (B, K-1, m).
    """
    if grid is None:
        inner = ctrl_grid[(ctrl_grid > p.tau) & (ctrl_grid < prob.theta)]
        grid = build_grid(prob, p, steps_per_interval, extra=inner)
    seg = _control_index(grid, ctrl_grid)
    U = prob.control_set[controls]  # (B, k, m)

    def rate(k, t, x, xd):
        return prob.f(t, x, xd, U[:, seg[k]])

    X, L, Y = integrate_batch(prob, p, grid, rate, batch=controls.shape[0])
    return grid, X, L, Y, U[:, seg]


def resolve_c_H(prob, c_H=None):
    if c_H is not None:
        return float(c_H)
    if prob.c_f is not None:
        return float(prob.c_f)
    from .hamiltonian import estimate_constants

    return estimate_constants(prob, alpha=1.0, samples=512, seed=0).c_H


def _unit(v):
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, nv, out=np.zeros_like(v), where=nv > 0)


def _clip_to_ball(v, radius):
    nv = np.linalg.norm(v, axis=-1)
    scale = np.where(nv > radius, radius / np.where(nv > 0, nv, 1.0), 1.0)
    return v * scale[..., None]


def integrate_inclusion(prob, p, sel, steps_per_interval, c_H=None, end=None):
    """A trajectory of the neutral differential inclusion built from ``sel``."""
    c_H = resolve_c_H(prob, c_H)
    end = prob.theta if end is None else float(end)
    if p.tau >= end:
        raise DomainError("cannot integrate from τ >= end")
    grid = build_grid(prob, p, steps_per_interval, end=end)
    n = prob.n
    eta = sel.eta
    if sel.kind == "random":
        rng = np.random.default_rng(sel.seed)
        dirs = _unit(rng.normal(size=(sel.pieces, n)))
        fracs = rng.uniform(size=sel.pieces)
        cuts = np.linspace(p.tau, end, sel.pieces + 1)

    def rate(k, t, x, xd):
        radius = ball_radius(x, xd, eta, c_H)
        if sel.kind == "zero":
            v = np.zeros_like(x)
        elif sel.kind == "constant":
            v = _clip_to_ball(np.broadcast_to(sel.vector, x.shape), radius)
        elif sel.kind == "extremal":
            v = -radius[:, None] * _unit(np.broadcast_to(sel.vector, x.shape))
        elif sel.kind == "random":
            i = min(int(np.searchsorted(cuts, t, side="right")) - 1, sel.pieces - 1)
            v = (radius * fracs[i])[:, None] * dirs[i][None, :]
        else:
            v = _clip_to_ball(np.atleast_2d(np.asarray(sel.policy(t, x[0], xd[0]), dtype=float)), radius)
        norm_v = np.linalg.norm(v, axis=-1)
        assert np.all(norm_v <= radius * (1 + 1e-12) + 1e-14), "selection left the ball"
        return v

    X, L, Y = integrate_batch(prob, p, grid, rate)
    return Trajectory(p, grid, X[0], L[0], Y[0],
                      meta={"selection": sel.describe(), "c_H": c_H,
                            "steps_per_interval": steps_per_interval})


def reduced_path(prob, x):
    """y(t_k) = x(t_k) - g(t_k, x(t_k - h)) on the trajectory grid."""
    xd = x.eval_many(x.grid - x.h)
    return np.array([x.values[k] - prob.g(t, xd[k]) for k, t in enumerate(x.grid)])


def inclusion_slack(prob, x, eta, c_H=None):
    """min over steps of radius - ‖Δy/Δt‖ (radius at the left endpoint).

    Nonnegative iff every Euler increment lies in F^η.
    """
    c_H = resolve_c_H(prob, c_H)
    y = x.y if x.y is not None else reduced_path(prob, x)
    dt = np.diff(x.grid)
    vel = np.diff(y, axis=0) / dt[:, None]
    xd = x.eval_many(x.grid[:-1] - x.h)
    radius = ball_radius(x.values[:-1], xd, eta, c_H)
    return float(np.min(radius - np.linalg.norm(vel, axis=1)))


def reduced_lipschitz(prob, x):
    """Largest grid difference quotient of the reduced path."""
    y = x.y if x.y is not None else reduced_path(prob, x)
    return float(np.max(np.linalg.norm(np.diff(y, axis=0), axis=1) / np.diff(x.grid)))


def sup_g(prob, alpha, samples=2048, seed=0):
    """Sampled sup of ‖g(τ, v)‖ over τ ∈ [0, ϑ], ‖v‖ <= α."""
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0, prob.theta, size=samples)
    dirs = _unit(rng.normal(size=(samples, prob.n)))
    radii = alpha * rng.uniform(size=samples) ** (1.0 / prob.n)
    radii[: samples // 4] = alpha
    vs = dirs * radii[:, None]
    vals = np.array([np.linalg.norm(prob.g(t, v)) for t, v in zip(ts, vs)])
    best = float(np.max(vals)) if vals.size else 0.0
    if not math.isfinite(best):
        raise NumericError("non-finite sup of g")
    return best


def apriori_bounds(prob, alpha, c_H, samples=2048, seed=0):
    """Growth bounds for trajectories of X¹ started in P(α)."""
    if alpha <= 0:
        raise ValueError("α must be positive")
    a_g = sup_g(prob, alpha, samples, seed)
    T = prob.theta
    alpha_X = (alpha + a_g + (c_H + 1.0) * T) * math.exp(2.0 * c_H * T) + a_g
    lam = c_H * (1.0 + 2.0 * alpha_X) + 1.0
    alpha_X_star = alpha + a_g + lam * T
    for v in (alpha_X, alpha_X_star, lam):
        if not math.isfinite(v):
            raise NumericError("non-finite a-priori bound")
    return Bounds(alpha_X, alpha_X_star, lam)


def ci_derivative_g(prob, tau, w):
    """∂g/∂τ(τ, w(-h)) + ∇_x g(τ, w(-h)) · d⁺w(-h)/dξ."""
    if w.delta_w <= 0:
        raise NotInPLipStar("ci-derivative of g needs a history smooth at -h")
    x = w.at_start
    slope = right_derivative_at_start(w)
    return np.asarray(prob.dg_dt(tau, x), dtype=float) + np.asarray(prob.grad_g(tau, x), dtype=float) @ slope
