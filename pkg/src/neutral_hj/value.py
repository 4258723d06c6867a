"""Bolza cost, the value functional by exhaustive enumeration of
piecewise-constant controls, Hamiltonian feedback synthesis and the
extension of a functional from Lipschitz to piecewise-Lipschitz histories.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import ControlSignal, Selection, build_grid, integrate_control, integrate_controls_batch
from .hamiltonian import hamiltonian_eval
from .histories import PathPoint, Trajectory, extend_constant, mollify, random_history, shift

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10 ** 6
DEFAULT_SCHEDULE = (4, 8, 16, 32, 64)

__all__ = [
    "BudgetError", "CandidateFunctional", "ControlSignal", "ExtensionResult", "cost_eval",
    "value_enumerate", "synthesize_feedback", "value_extend", "numeric_value_functional",
    "terminal_history", "feedback_selection",
]


class BudgetError(RuntimeError):
    """Exhaustive enumeration would exceed the control budget."""


@dataclass(frozen=True, eq=False)
class CandidateFunctional:
    """An evaluatable φ(τ, z, w), optionally with its ci-derivative pair."""

    evaluator: Callable
    kind: str = "analytic"
    ci_derivative: Callable | None = None
    grad_z: Callable | None = None
    name: str = ""
    info: dict = field(default_factory=dict)

    def __call__(self, tau, z, w):
        return float(self.evaluator(float(tau), np.atleast_1d(np.asarray(z, dtype=float)), w))

    def at(self, p):
        return self(p.tau, p.z, p.w)

    @property
    def has_derivatives(self):
        return self.ci_derivative is not None and self.grad_z is not None

    def check_derivatives(self, prob, points=10, tol=1e-4, seed=0, alpha=1.0):
        """Finite-difference cross-check of the analytic pair at random G_* points.

        Returns the largest discrepancy; raises ValueError above ``tol``.
        """
        if not self.has_derivatives:
            raise ValueError("functional carries no analytic derivatives")
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(points):
            p = random_g_star_point(rng, prob, alpha)
            delta = 1e-6 * prob.h
            kappa = extend_constant(p, prob.theta)
            fwd = (self(p.tau + delta, p.z, shift(kappa, p.tau + delta)) - self.at(p)) / delta
            worst = max(worst, abs(fwd - self.ci_derivative(p.tau, p.z, p.w)))
            grad = np.asarray(self.grad_z(p.tau, p.z, p.w), dtype=float)
            for i in range(prob.n):
                e = np.zeros(prob.n)
                e[i] = 1e-6
                fd = (self(p.tau, p.z + e, p.w) - self(p.tau, p.z - e, p.w)) / 2e-6
                worst = max(worst, abs(fd - grad[i]))
        if worst > tol:
            raise ValueError(f"analytic derivatives disagree with finite differences by {worst:.3g}")
        return worst


def random_g_star_point(rng, prob, alpha=1.0, margin=0.05):
    """A random point of G_*: τ strictly inside a delay interval, smooth history start."""
    i = int(rng.integers(0, prob.I))
    tau = prob.h * (i + rng.uniform(margin, 1.0 - margin))
    w = random_history(rng, prob.h, prob.n, alpha)
    z = rng.uniform(-alpha, alpha, size=prob.n) / math.sqrt(prob.n)
    return PathPoint(tau, z, w)


# ---------------------------------------------------------------------------
# batched evaluation helpers
# ---------------------------------------------------------------------------

def _batch_values_at(p, grid, X, L, times):
    """Right values of batch trajectories at arbitrary times (B, len(times), n)."""
    B, K, n = X.shape
    out = np.empty((B, len(times), n))
    tol = 1e-11
    for q, t in enumerate(times):
        if t < p.tau - tol * max(1.0, abs(p.tau)):
            out[:, q] = p.w.eval(max(t - p.tau, -p.w.h))
            continue
        j = int(np.searchsorted(grid, t, side="right")) - 1
        j = min(max(j, 0), K - 1)
        if abs(grid[j] - t) <= tol * max(1.0, abs(t)) or j == K - 1:
            out[:, q] = X[:, j]
        elif j + 1 < K and abs(grid[j + 1] - t) <= tol * max(1.0, abs(t)):
            out[:, q] = X[:, j + 1]
        else:
            frac = (t - grid[j]) / (grid[j + 1] - grid[j])
            out[:, q] = (1.0 - frac) * X[:, j] + frac * L[:, j + 1]
    return out


def terminal_history(x):
    """x_ϑ as a History."""
    return shift(x, x.end)


def _terminal_costs(prob, p, grid, X, L, Y):
    B = X.shape[0]
    zT = X[:, -1]
    if getattr(prob, "sigma_batch", None) is not None:
        def past(times):
            return _batch_values_at(p, grid, X, L, np.asarray(times, dtype=float))
        return np.asarray(prob.sigma_batch(zT, past), dtype=float).reshape(B)
    out = np.empty(B)
    for b in range(B):
        x = Trajectory(p, grid, X[b], L[b], Y[b])
        out[b] = prob.sigma(zT[b], terminal_history(x))
    return out


def _running_costs(prob, p, grid, X, L, Uk):
    """Composite midpoint ∫ f⁰ for each batch member; Uk is (B, K-1, m)."""
    mids = 0.5 * (grid[:-1] + grid[1:])
    xm = 0.5 * (X[:, :-1] + L[:, 1:])
    xdm = _batch_values_at(p, grid, X, L, mids - prob.h)
    f0 = prob.f0(mids[None, :], xm, xdm, Uk)
    f0 = np.broadcast_to(f0, xm.shape[:2])
    return f0 @ np.diff(grid)


def cost_eval(prob, p, u, steps):
    """J = σ(x(ϑ), x_ϑ) + ∫ f⁰ along the trajectory driven by ``u``."""
    if p.tau >= prob.theta:
        return float(prob.sigma(p.z, p.w))
    x = integrate_control(prob, p, u, steps)
    X, L = x.values[None], x.left[None]
    seg = np.clip(np.searchsorted(u.grid, x.grid[:-1] + 1e-12, side="right") - 1, 0, u.values.shape[0] - 1)
    run = _running_costs(prob, p, x.grid, X, L, u.values[seg][None])[0]
    return float(prob.sigma(x.values[-1], terminal_history(x)) + run)


def _digits(indices, base, k):
    out = np.empty((indices.size, k), dtype=np.int64)
    rem = indices.copy()
    for i in range(k - 1, -1, -1):
        out[:, i] = rem % base
        rem //= base
    return out


def _batch_costs(prob, p, ctrl_grid, controls, steps, grid):
    grid, X, L, Y, Uk = integrate_controls_batch(prob, p, ctrl_grid, controls, steps, grid=grid)
    return _terminal_costs(prob, p, grid, X, L, Y) + _running_costs(prob, p, grid, X, L, Uk)


def value_enumerate(prob, p, k, steps, budget=DEFAULT_BUDGET, chunk=4096, refine=0, jobs=1):
    """Exhaustive minimum of the cost over controls constant on a uniform k-grid.

    Ties go to the lexicographically smallest control index.  With
    ``refine=r > 1`` a single coordinate-descent sweep runs on the r-times
    finer grid starting from the best enumerated control.  ``jobs > 1``
    spreads index chunks over threads.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if p.tau >= prob.theta:
        return float(prob.sigma(p.z, p.w)), None
    Lsz = prob.control_set.shape[0]
    total = Lsz ** k
    if total > budget:
        raise BudgetError(f"{Lsz}^{k} = {total} controls exceed the budget {budget}")
    ctrl_grid = np.linspace(p.tau, prob.theta, k + 1)
    grid = build_grid(prob, p, steps, extra=ctrl_grid[1:-1])

    def best_in(start):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        costs = _batch_costs(prob, p, ctrl_grid, _digits(idx, Lsz, k), steps, grid)
        i = int(np.argmin(costs))
        return float(costs[i]), int(idx[i])

    starts = range(0, total, chunk)
    if jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(best_in, starts))
    else:
        results = [best_in(s) for s in starts]
    best_val, best_idx = min(results)
    best = _digits(np.array([best_idx]), Lsz, k)[0]
    if refine and refine > 1:
        best_val, best, ctrl_grid = _refine(prob, p, best, k, refine, steps, best_val)
    return best_val, ControlSignal(ctrl_grid, prob.control_set[best])


def _refine(prob, p, best, k, r, steps, best_val):
    fine = np.repeat(best, r)
    ctrl_grid = np.linspace(p.tau, prob.theta, k * r + 1)
    grid = build_grid(prob, p, steps, extra=ctrl_grid[1:-1])
    Lsz = prob.control_set.shape[0]
    for i in range(fine.size):
        cand = np.repeat(fine[None, :], Lsz, axis=0)
        cand[:, i] = np.arange(Lsz)
        costs = _batch_costs(prob, p, ctrl_grid, cand, steps, grid)
        j = int(np.argmin(costs))
        if costs[j] < best_val:
            best_val = float(costs[j])
            fine = cand[j]
    return best_val, fine, ctrl_grid


def synthesize_feedback(prob, p, s, k, steps):
    """Controls chosen at each node of a uniform k-grid as the Hamiltonian
    minimizer for the fixed vector ``s``; returns (control, trajectory)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    ctrl_grid = np.linspace(p.tau, prob.theta, k + 1)
    values = np.tile(prob.control_set[0], (k, 1))
    x = None
    for i in range(k):
        t_i = ctrl_grid[i]
        if i == 0:
            xi, xd = p.z, p.w.eval(-prob.h)
        else:
            xi, xd = x.eval(t_i), x.eval(t_i - prob.h)
        _, u_i = hamiltonian_eval(prob, t_i, xi, xd, s)
        values[i:] = u_i
        x = integrate_control(prob, p, ControlSignal(ctrl_grid, values.copy()), steps)
    return ControlSignal(ctrl_grid, values), x


def feedback_selection(prob, u, eta=0.0):
    """The feedback control mapped into the inclusion as a selection."""
    def policy(t, x, xd):
        return prob.f(t, x, xd, u.at(t))
    return Selection.from_policy(policy, eta=eta)


@dataclass
class ExtensionResult:
    value: float
    gaps: list
    values: list
    schedule: list
    converged: bool
    warning: str | None = None


def _is_lipschitz_at(z, w):
    return w.jumps().size == 0 and np.allclose(w.left_end, z, rtol=0, atol=1e-14)


def value_extend(prob, base, p, j_schedule=DEFAULT_SCHEDULE):
    """Evaluate ``base`` along the mollified sequence of (z, w)."""
    if _is_lipschitz_at(p.z, p.w):
        v = base(p.tau, p.z, p.w)
        return ExtensionResult(v, [0.0] * (len(j_schedule) - 1), [v] * len(j_schedule),
                               list(j_schedule), True)
    values = []
    for j in j_schedule:
        wj = mollify(p.z, p.w, j)
        values.append(base(p.tau, wj.left_end, wj))
    gaps = [abs(b - a) for a, b in zip(values[:-1], values[1:])]
    converged = bool(gaps) and gaps[-1] < 1e-3 * (1 + abs(values[-1]))
    warning = None
    if len(gaps) >= 3 and gaps[-1] >= gaps[-2] >= gaps[-3] and gaps[-1] > 0:
        warning = "Cauchy gaps did not decrease over the last three mollification levels"
        log.warning(warning)
    return ExtensionResult(values[-1], gaps, values, list(j_schedule), converged, warning)


def numeric_value_functional(prob, k=4, steps=16, budget=DEFAULT_BUDGET, name=None):
    """The enumerated value as a CandidateFunctional."""
    def evaluate(tau, z, w):
        return value_enumerate(prob, PathPoint(tau, z, w), k, steps, budget)[0]
    return CandidateFunctional(evaluate, kind="numeric", name=name or f"{prob.name}:enumerated",
                               info={"k": k, "steps": steps, "budget": budget})
