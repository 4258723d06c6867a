"""Sampling-based checks of the solution characterizations.

Every check returns a :class:`VerificationReport` whose ``slack`` is sign
normalized: the check passes iff ``slack >= -tolerance``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (DomainError, Selection, ball_radius, ci_derivative_g, integrate_inclusion,
                       resolve_c_H)
from .hamiltonian import hamiltonian_eval, omega_eval
from .histories import History, PathPoint, extend_constant, random_history, shift, upsilon
from .problems import probe_vectors
from .value import feedback_selection, random_g_star_point, synthesize_feedback

DELTA_EXPONENTS = tuple(range(3, 11))
POINTS_PER_DELTA = 16
DEFAULT_RANDOM_SELECTIONS = 32
RESIDUAL_TOL = 1e-6


class ContractError(TypeError):
    """A functional lacks something the check requires."""


class ParameterError(ValueError):
    pass


def point_to_dict(p):
    return {"tau": p.tau, "z": p.z.tolist(), "w": p.w.to_dict()}


@dataclass
class VerificationReport:
    check: str
    problem: str
    functional: str
    points: list
    slack: float
    tolerance: float
    samples: int
    seed: int
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(check, prob, phi, points, slack, tol, samples, seed, details=None):
    slack = float(slack) + 0.0
    return VerificationReport(check=check, problem=prob.name, functional=getattr(phi, "name", ""),
                              points=[point_to_dict(p) for p in points], slack=slack,
                              tolerance=float(tol), samples=int(samples), seed=int(seed),
                              passed=bool(slack >= -tol), details=details or {})


def default_tolerance(prob, steps):
    """5·(Δt + control mesh)."""
    return 5.0 * (prob.h / steps + prob.control_mesh)


def delta_schedule(h):
    return [h * 2.0 ** -e for e in DELTA_EXPONENTS]


def _ball_point(rng, n, radius):
    d = rng.normal(size=n)
    d /= max(np.linalg.norm(d), 1e-300)
    return d * radius * rng.uniform() ** (1.0 / n)


# ---------------------------------------------------------------------------
# terminal condition
# ---------------------------------------------------------------------------

def check_terminal(prob, phi, samples=200, seed=0, tol=0.0, alpha=1.0):
    """max |φ(ϑ, z, w) - σ(z, w)| over random (z, w)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_point = None
    for _ in range(samples):
        w = random_history(rng, prob.h, prob.n, alpha)
        z = _ball_point(rng, prob.n, alpha)
        gap = abs(phi(prob.theta, z, w) - prob.sigma(z, w))
        if worst_point is None or gap > worst:
            worst, worst_point = gap, PathPoint(prob.theta, z, w)
    return _report("terminal", prob, phi, [worst_point], -worst, tol, samples, seed,
                   {"max_abs_gap": worst})


# ---------------------------------------------------------------------------
# minimax (DPP) inequalities
# ---------------------------------------------------------------------------

def _family(prob, p, s_list, eta, selections, steps, seed, k_feedback):
    fam = [("zero", Selection.zero(eta))]
    for i, s in enumerate(s_list):
        if np.linalg.norm(s) > 0:
            fam.append((f"extremal+{i}", Selection.extremal(s, eta)))
            fam.append((f"extremal-{i}", Selection.extremal(-s, eta)))
        u, _ = synthesize_feedback(prob, p, s, k_feedback, steps)
        fam.append((f"feedback{i}", feedback_selection(prob, u, eta)))
    for r in range(selections):
        fam.append((f"random{r}", Selection.random(seed * 10007 + r, eta)))
    return fam


def _restricted_ok(prob, p, t, eta):
    i = math.floor(p.tau / prob.h + 1e-12)
    if t > (i + 1) * prob.h + 1e-12:
        raise DomainError("restricted mode needs t within the current delay interval")
    if not 0 < eta <= 1:
        raise DomainError("restricted mode needs η in (0, 1]")
    if p.w.jumps().size or p.w.delta_w <= 0 or not np.allclose(p.w.left_end, p.z, atol=1e-12, rtol=0):
        raise DomainError("restricted mode needs a smooth history continuous at 0")


def check_dpp(prob, phi, p, t, s_samples, eta=1.0, selections=DEFAULT_RANDOM_SELECTIONS, tol=None,
              seed=0, steps=32, c_H=None, restricted=False, k_feedback=4):
    """Upper and lower minimax inequalities over a finite trajectory family.

    A failing upper or lower inequality means no witness was found in the
    family, which is inconclusive for the inequality itself.
    """
    if not p.tau < t <= prob.theta + 1e-12:
        raise DomainError("check_dpp needs τ < t <= ϑ")
    t = min(t, prob.theta)
    if restricted:
        _restricted_ok(prob, p, t, eta)
    tol = default_tolerance(prob, steps) if tol is None else tol
    c_H = resolve_c_H(prob, c_H)
    s_list = [np.atleast_1d(np.asarray(s, dtype=float)) for s in s_samples]
    base = phi.at(p)
    fam = _family(prob, p, s_list, eta, selections, steps, seed, k_feedback)
    trajs = []
    for label, sel in fam:
        x = integrate_inclusion(prob, p, sel, steps, c_H=c_H, end=t)
        trajs.append((label, x, phi(t, x.values[-1], shift(x, t))))
    per_s = []
    slack = math.inf
    for s in s_list:
        totals = np.array([v + omega_eval(prob, p.tau, t, x, s) for _, x, v in trajs])
        upper = base - float(totals.min())
        lower = float(totals.max()) - base
        per_s.append({"s": s.tolist(), "upper_slack": upper, "lower_slack": lower,
                      "upper_witness": trajs[int(totals.argmin())][0],
                      "lower_witness": trajs[int(totals.argmax())][0]})
        slack = min(slack, upper, lower)
    details = {"t": t, "eta": eta, "c_H": c_H, "steps": steps, "family_size": len(fam),
               "restricted": restricted, "per_s": per_s}
    if slack < -tol:
        details["note"] = "no witness in budget"
    return _report("dpp_restricted" if restricted else "dpp", prob, phi, [p], slack, tol,
                   len(fam), seed, details)


# ---------------------------------------------------------------------------
# directional derivatives and the Dini inequalities
# ---------------------------------------------------------------------------

def directional_derivative(phi, p, l, side="lower", steps=None, theta=None):
    """One-sided derivative along (1, l) with the constant extension of p.

    Returns the min (lower) or max (upper) of the last three quotients.
    """
    if theta is not None and p.tau >= theta:
        raise DomainError("directional derivatives need τ < ϑ")
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    steps = delta_schedule(p.h) if steps is None else [float(d) for d in steps]
    if any(d <= 0 for d in steps) or any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be positive and decreasing")
    l = np.atleast_1d(np.asarray(l, dtype=float))
    kappa = extend_constant(p, p.tau + steps[0])
    base = phi.at(p)
    q = [(phi(p.tau + d, p.z + l * d, shift(kappa, p.tau + d)) - base) / d for d in steps]
    tail = q[-3:]
    return float(min(tail) if side == "lower" else max(tail))


def _require_g_star(p):
    if not p.interior_flag:
        raise DomainError("the check needs a G_* point (τ inside a delay interval, smooth history start)")


def check_dini(prob, phi, p, s_samples, l_samples_per_s=16, tol=1e-3, seed=0, c_H=None):
    """Dini form: inf over l of the lower bracket <= 0 and sup of the upper >= 0."""
    _require_g_star(p)
    rng = np.random.default_rng(seed)
    c_H = resolve_c_H(prob, c_H)
    n = prob.n
    b = ci_derivative_g(prob, p.tau, p.w)
    r = p.w.at_start
    rho = float(ball_radius(p.z, r, 0.0, c_H))
    cache = {}

    def D(l, side):
        key = (side, tuple(np.round(l, 15)))
        if key not in cache:
            cache[key] = directional_derivative(phi, p, l, side, theta=prob.theta)
        return cache[key]

    # linear part of l -> D(l) by differences, used for extra extremal candidates
    d0 = D(b, "lower")
    ghat = np.array([(D(b + rho * e, "lower") - d0) / rho for e in np.eye(n)])
    per_s = []
    slack = math.inf
    for s in s_samples:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        H, _ = hamiltonian_eval(prob, p.tau, p.z, r, s)
        cands = [b.copy()]
        for v in (s, ghat - s):
            nv = np.linalg.norm(v)
            if nv > 0:
                cands += [b + rho * v / nv, b - rho * v / nv]
        cands += [b + _ball_point(rng, n, rho) for _ in range(l_samples_per_s)]
        lower = [D(l, "lower") + b @ s + H - l @ s for l in cands]
        upper = [D(l, "upper") + b @ s + H - l @ s for l in cands]
        lo, hi = float(min(lower)), float(max(upper))
        per_s.append({"s": s.tolist(), "lower_inf": lo, "upper_sup": hi})
        slack = min(slack, -lo, hi)
    details = {"b": b.tolist(), "rho": rho, "c_H": c_H, "per_s": per_s,
               "deltas": delta_schedule(p.h)}
    return _report("dini", prob, phi, [p], slack, tol, len(s_samples) * (l_samples_per_s + 5),
                   seed, details)


# ---------------------------------------------------------------------------
# sub/superdifferentials
# ---------------------------------------------------------------------------

def membership_estimate(phi, p, p0, pvec, kind, seed=0):
    """liminf (sub) or limsup (super) of the D± quotient over shrinking boxes."""
    rng = np.random.default_rng(seed)
    pvec = np.atleast_1d(np.asarray(pvec, dtype=float))
    n = p.z.size
    deltas = delta_schedule(p.h)
    kappa = extend_constant(p, p.tau + deltas[0])
    base = phi.at(p)
    levels = []
    for d in deltas:
        pts = [(p.tau + d, p.z)]
        for e in np.eye(n):
            pts += [(p.tau + d, p.z + d * e), (p.tau + d, p.z - d * e),
                    (p.tau, p.z + d * e), (p.tau, p.z - d * e)]
        for _ in range(POINTS_PER_DELTA):
            pts.append((p.tau + d * rng.uniform(1e-3, 1.0), p.z + _ball_point(rng, n, d)))
        q = []
        for t, x in pts:
            den = abs(t - p.tau) + float(np.linalg.norm(x - p.z))
            num = phi(t, x, shift(kappa, t)) - base - (t - p.tau) * p0 - (x - p.z) @ pvec
            q.append(num / den)
        levels.append(min(q) if kind == "sub" else max(q))
    tail = levels[-3:]
    return float(min(tail) if kind == "sub" else max(tail)), levels


def fd_candidates(prob, phi, p):
    """(p0, p) estimates for functionals without analytic derivatives."""
    p0 = directional_derivative(phi, p, np.zeros(prob.n), "lower", theta=prob.theta)
    eps = 1e-6
    grad = np.array([(phi(p.tau, p.z + eps * e, p.w) - phi(p.tau, p.z - eps * e, p.w)) / (2 * eps)
                     for e in np.eye(prob.n)])
    return p0, grad


def default_candidates(prob, phi, p):
    if phi.has_derivatives:
        p0, grad = phi.ci_derivative(p.tau, p.z, p.w), np.asarray(phi.grad_z(p.tau, p.z, p.w))
    else:
        p0, grad = fd_candidates(prob, phi, p)
    return [(p0, grad, "sub"), (p0, grad, "super")]


def check_subsuper(prob, phi, p, candidates=None, tol=1e-3, seed=0):
    """Viscosity inequalities for each candidate (p0, p) that passes the membership test."""
    _require_g_star(p)
    if candidates is None:
        candidates = default_candidates(prob, phi, p)
    b = ci_derivative_g(prob, p.tau, p.w)
    r = p.w.at_start
    rows = []
    slack = math.inf
    for i, (p0, pv, kind) in enumerate(candidates):
        if kind not in ("sub", "super"):
            raise ValueError("candidate kind must be 'sub' or 'super'")
        pv = np.atleast_1d(np.asarray(pv, dtype=float))
        est, levels = membership_estimate(phi, p, float(p0), pv, kind, seed + i)
        member_slack = est if kind == "sub" else -est
        member = member_slack >= -tol
        H, _ = hamiltonian_eval(prob, p.tau, p.z, r, pv)
        expr = float(p0) + float(b @ pv) + H
        ineq_slack = -expr if kind == "sub" else expr
        rows.append({"p0": float(p0), "p": pv.tolist(), "kind": kind, "membership_slack": member_slack,
                     "member": bool(member), "expression": expr, "inequality_slack": ineq_slack,
                     "levels": levels})
        if member:
            slack = min(slack, ineq_slack)
    members = sum(r_["member"] for r_ in rows)
    details = {"b": b.tolist(), "candidates": rows, "members": members, "deltas": delta_schedule(p.h)}
    if members == 0:
        slack = 0.0
        details["note"] = "no candidate passed the membership test"
    return _report("subsuper", prob, phi, [p], slack, tol,
                   len(candidates) * (POINTS_PER_DELTA + 1 + 4 * prob.n) * len(DELTA_EXPONENTS),
                   seed, details)


# ---------------------------------------------------------------------------
# classical residual
# ---------------------------------------------------------------------------

def hj_residual(prob, phi, p):
    """∂ci φ + ⟨∂ci g, ∇_z φ⟩ + H(τ, z, w(-h), ∇_z φ)."""
    if not phi.has_derivatives:
        raise ContractError("hj_residual needs analytic (∂ci φ, ∇_z φ)")
    _require_g_star(p)
    grad = np.atleast_1d(np.asarray(phi.grad_z(p.tau, p.z, p.w), dtype=float))
    b = ci_derivative_g(prob, p.tau, p.w)
    H, _ = hamiltonian_eval(prob, p.tau, p.z, p.w.at_start, grad)
    return float(phi.ci_derivative(p.tau, p.z, p.w) + b @ grad + H)


def check_residual(prob, phi, points, tol=RESIDUAL_TOL, seed=0):
    res = [hj_residual(prob, phi, p) for p in points]
    worst = max(abs(v) for v in res)
    return _report("hj_residual", prob, phi, points, -worst, tol, len(points), seed,
                   {"residuals": res})


# ---------------------------------------------------------------------------
# the (φ2) Lipschitz property
# ---------------------------------------------------------------------------

class PairSampler:
    """Random pairs in P(α): independent draws and small perturbations."""

    def __init__(self, prob, alpha):
        self.prob = prob
        self.alpha = float(alpha)

    def sample(self, rng):
        prob, a = self.prob, self.alpha
        tau = rng.uniform(0.0, prob.theta)
        mode = int(rng.integers(0, 4))
        if mode == 0:
            first = (_ball_point(rng, prob.n, a), random_history(rng, prob.h, prob.n, a))
            second = (_ball_point(rng, prob.n, a), random_history(rng, prob.h, prob.n, a))
            return tau, first, second
        z = _ball_point(rng, prob.n, 0.9 * a)
        w = random_history(rng, prob.h, prob.n, 0.9 * a)
        eps = 0.1 * a * 10.0 ** rng.uniform(-2.0, 0.0)
        z2 = z + (_ball_point(rng, prob.n, eps) if mode in (1, 3) else 0.0)
        w2 = w + random_history(rng, prob.h, prob.n, eps) if mode in (2, 3) else w
        return tau, (z, w), (z2, w2)

    def shrink(self, pair, factor):
        tau, (z, w), (z2, w2) = pair
        return tau, (z, w), (z + factor * (z2 - z), w + (w2 - w).scale(factor))


class MovableStepSampler:
    """Pairs of step histories whose jump sits on either side of -h/2."""

    def __init__(self, prob, alpha, tau=None):
        self.prob = prob
        self.alpha = float(alpha)
        self.tau = 0.25 * prob.h if tau is None else tau

    def _step(self, where):
        h, n, a = self.prob.h, self.prob.n, self.alpha
        return History.step(h, [where], [np.full(n, -a / math.sqrt(n)), np.full(n, a / math.sqrt(n))])

    def sample(self, rng):
        eps = 0.1 * self.prob.h * rng.uniform(1e-3, 1.0)
        return self._pair(eps)

    def _pair(self, eps):
        z = np.zeros(self.prob.n)
        mid = -0.5 * self.prob.h
        return self.tau, (z, self._step(mid - eps)), (z, self._step(mid + eps)), eps

    def shrink(self, pair, factor):
        return self._pair(pair[3] * factor)


def _ratios(prob, phi, pairs):
    out = []
    for pair in pairs:
        tau, (z, w), (z2, w2) = pair[:3]
        den = upsilon(tau, z - z2, w - w2)
        if den <= 1e-14:
            out.append(math.nan)
            continue
        out.append(abs(phi(tau, z, w) - phi(tau, z2, w2)) / den)
    return np.array(out)


def check_phi2(prob, phi, alpha, pairs=200, seed=0, pair_sampler=None, shrink_steps=8):
    """Empirical λ_φ and its stability when the sample is doubled.

    Also shrinks the worst pair towards its first member; a growing ratio
    means no finite λ_φ.
    """
    if pairs < 2:
        raise ValueError("need at least two pairs")
    sampler = pair_sampler or PairSampler(prob, alpha)
    rng = np.random.default_rng(seed)
    drawn = [sampler.sample(rng) for _ in range(2 * pairs)]
    ratios = _ratios(prob, phi, drawn)
    ok = ~np.isnan(ratios)
    first = ratios[:pairs][ok[:pairs]]
    lam1 = float(first.max()) if first.size else 0.0
    lam2 = float(ratios[ok].max()) if ok.any() else 0.0
    if ok.any():
        worst = drawn[int(np.nanargmax(ratios))]
        shrunk = _ratios(prob, phi, [sampler.shrink(worst, 0.5 ** k) for k in range(1, shrink_steps + 1)])
        shrunk = shrunk[~np.isnan(shrunk)]
    else:
        shrunk = np.array([])
    peak = float(shrunk.max()) if shrunk.size else 0.0
    finite = math.isfinite(lam1) and math.isfinite(lam2)
    stability = 0.2 * lam1 - abs(lam2 - lam1)
    shrink_margin = 1.2 * lam2 - peak
    slack = min(stability, shrink_margin) if finite else -math.inf
    details = {"alpha": alpha, "lambda_hat": lam1, "lambda_hat_doubled": lam2,
               "relative_change": abs(lam2 - lam1) / lam1 if lam1 > 0 else 0.0,
               "shrink_ratios": shrunk.tolist(), "skipped": int((~ok).sum())}
    return _report("phi2", prob, phi, [], slack, 0.0, 2 * pairs, seed, details)


# ---------------------------------------------------------------------------
# the ν comparison diagnostic
# ---------------------------------------------------------------------------

def _lambdas(consts, alpha):
    """λ_H(α), λ_g(α) from the estimate, taken at least 1."""
    def pick(table):
        keys = sorted(float(k) for k in table)
        key = next((k for k in keys if k >= alpha - 1e-12), keys[-1])
        return max(float(table[key] if key in table else table[str(key)]), 1.0)
    return pick(consts.lambda_H), pick(consts.lambda_g)


def theta_rate(consts, alpha, h):
    lam_H, lam_g = _lambdas(consts, alpha)
    return 4.0 * lam_H + 2.0 * lam_g / h


def theta_value(consts, alpha, gamma, h, tau):
    return (math.exp(-theta_rate(consts, alpha, h) * tau) - gamma) / gamma


def gamma_for(consts, alpha, h, theta):
    """A γ with θ > 1 on [0, ϑ]."""
    return 0.25 * math.exp(-theta_rate(consts, alpha, h) * theta)


def nu_value(consts, alpha, gamma, eps, h, tau, z, w):
    lam_H, lam_g = _lambdas(consts, alpha)
    th = theta_value(consts, alpha, gamma, h, tau)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return th * (math.sqrt(eps ** 4 + float(z @ z)) + 2.0 * lam_H * w.weighted_l1(1.0, -2.0 * lam_g / h))


def nu_grad_z(consts, alpha, gamma, eps, h, tau, z):
    th = theta_value(consts, alpha, gamma, h, tau)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return th * z / math.sqrt(eps ** 4 + float(z @ z))


def nu_diagnostic(consts, alpha, gamma, eps, prob, x, x2, tau, t):
    """(lhs, rhs) of ν(t) - ν(τ) <= ∫_τ^t ΔH."""
    h = prob.h
    if theta_value(consts, alpha, gamma, h, prob.theta) <= 1.0:
        raise ParameterError("γ too large: θ must exceed 1 on [0, ϑ]")
    if not (x.tau <= tau < t <= min(x.end, x2.end) + 1e-12):
        raise DomainError("need τ < t inside both trajectories")

    def dy(s):
        return (x.eval(s) - prob.g(s, x.eval(s - h))) - (x2.eval(s) - prob.g(s, x2.eval(s - h)))

    def nu(s):
        return nu_value(consts, alpha, gamma, eps, h, s, dy(s), shift(x, s) - shift(x2, s))

    lhs = nu(t) - nu(tau)
    nodes = np.union1d(x.grid, x2.grid)
    nodes = np.union1d(nodes[(nodes > tau) & (nodes < t)], [tau, t])
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    total = 0.0
    for m, dt in zip(mids, np.diff(nodes)):
        d = dy(m)
        grad = nu_grad_z(consts, alpha, gamma, eps, h, m, d)
        h1, _ = hamiltonian_eval(prob, m, x.eval(m), x.eval(m - h), grad)
        h2, _ = hamiltonian_eval(prob, m, x2.eval(m), x2.eval(m - h), grad)
        total += dt * (h1 - h2 + float(d @ grad))
    return float(lhs), float(total)


# ---------------------------------------------------------------------------
# suite runner
# ---------------------------------------------------------------------------

def sample_points(prob, count, seed, alpha=1.0):
    rng = np.random.default_rng(seed)
    return [random_g_star_point(rng, prob, alpha) for _ in range(count)]


def run_suite(prob, phi, points=5, seed=0, steps=32, alpha=1.0, s_samples=None, selections=8,
              phi2_pairs=200, jobs=1, dini_tol=None):
    """Terminal, DPP, Dini, D±, residual and (φ2) checks at sampled G_* points."""
    pts = sample_points(prob, points, seed, alpha)
    rng = np.random.default_rng(seed + 1)
    times = [p.tau + (prob.theta - p.tau) * rng.uniform(0.1, 1.0) for p in pts]
    s_list = probe_vectors(prob) if s_samples is None else s_samples
    tol_dpp = default_tolerance(prob, steps)
    tol_local = dini_tol if dini_tol is not None else (1e-3 if phi.has_derivatives else tol_dpp)

    tasks = [lambda: check_terminal(prob, phi, samples=200, seed=seed)]
    for i, (p, t) in enumerate(zip(pts, times)):
        tasks.append(lambda p=p, t=t, i=i: check_dpp(prob, phi, p, t, s_list, selections=selections,
                                                      seed=seed + i, steps=steps))
        tasks.append(lambda p=p, i=i: check_dini(prob, phi, p, s_list, tol=tol_local, seed=seed + i))
        tasks.append(lambda p=p, i=i: check_subsuper(prob, phi, p, tol=tol_local, seed=seed + i))
    if phi.has_derivatives:
        tasks.append(lambda: check_residual(prob, phi, pts, seed=seed))
    tasks.append(lambda: check_phi2(prob, phi, alpha, pairs=phi2_pairs, seed=seed))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda f: f(), tasks))
    return [f() for f in tasks]


def summary_table(reports):
    rows = [("check", "problem", "slack", "tol", "result")]
    for r in reports:
        rows.append((r.check, r.problem, f"{r.slack:.3e}", f"{r.tolerance:.1e}",
                     "pass" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip() for row in rows]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed}/{len(reports)} checks passed")
    return "\n".join(lines)
