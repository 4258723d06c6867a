"""The control Hamiltonian on the discretized control set, the ω functional
along trajectories, and sampled estimates of the structural constants."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dynamics import NumericError
from .histories import random_history


class EstimationError(RuntimeError):
    pass


def hamiltonian_eval(prob, t, z, r, s):
    """min over the lattice of ⟨f(t,z,r,u), s⟩ + f⁰(t,z,r,u) and the first minimizer."""
    U = prob.control_set
    z = np.asarray(z, dtype=float)[None, :]
    r = np.asarray(r, dtype=float)[None, :]
    F = np.broadcast_to(prob.f(t, z, r, U), (U.shape[0], prob.n))
    vals = F @ np.asarray(s, dtype=float) + np.broadcast_to(prob.f0(t, z, r, U), (U.shape[0],))
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"non-finite Hamiltonian terms at t={t}")
    i = int(np.argmin(vals))
    return float(vals[i]), U[i].copy()


def hamiltonian_batch(prob, t, Z, R, S):
    """Row-wise H for arrays of shape (B, n); ``t`` scalar or (B,)."""
    U = prob.control_set
    B = Z.shape[0]
    tt = np.asarray(t, dtype=float)
    tt = tt[:, None] if tt.ndim == 1 else tt
    F = prob.f(tt, Z[:, None, :], R[:, None, :], U[None, :, :])
    F = np.broadcast_to(F, (B, U.shape[0], prob.n))
    F0 = np.broadcast_to(prob.f0(tt, Z[:, None, :], R[:, None, :], U[None, :, :]), (B, U.shape[0]))
    vals = np.einsum("bln,bn->bl", F, S) + F0
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite Hamiltonian terms")
    return vals.min(axis=1)


def _quadrature_nodes(x, tau, t):
    g = x.grid
    pts = np.concatenate([[tau], g[(g > tau) & (g < t)], [t]])
    return pts


def omega_eval(prob, tau, t, x, s):
    """∫_τ^t H(ξ, x(ξ), x(ξ-h), s) dξ - ⟨y(t) - y(τ), s⟩ (composite midpoint)."""
    if not tau < t:
        raise ValueError("ω needs τ < t")
    s = np.asarray(s, dtype=float)
    pts = _quadrature_nodes(x, tau, t)
    mids = 0.5 * (pts[:-1] + pts[1:])
    xm = x.eval_many(mids)
    xdm = x.eval_many(mids - x.h)
    H = hamiltonian_batch(prob, mids, xm, xdm, np.broadcast_to(s, xm.shape))
    integral = float(np.sum(H * np.diff(pts)))
    return integral - float(np.dot(reduced_value(prob, x, t) - reduced_value(prob, x, tau), s))


def reduced_value(prob, x, t):
    return x.eval(t) - np.asarray(prob.g(t, x.eval(t - x.h)), dtype=float)


@dataclass
class Constants:
    c_H: float
    lambda_H: dict
    lambda_g: dict
    lambda_sigma: dict
    samples_used: int
    seed: int

    def to_dict(self):
        out = asdict(self)
        for key in ("lambda_H", "lambda_g", "lambda_sigma"):
            out[key] = {str(k): v for k, v in out[key].items()}
        return out


FLOOR = 1e-12


def _ball(rng, count, n, alpha):
    dirs = rng.normal(size=(count, n))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    radii = alpha * rng.uniform(size=count) ** (1.0 / n)
    return dirs * radii[:, None]


def _ratio_max(num, den):
    ok = den > 1e-14
    if not ok.any():
        raise EstimationError("all samples had a zero denominator")
    return max(float(np.max(num[ok] / den[ok])), FLOOR), int(ok.sum())


def estimate_constants(prob, alpha, samples=512, seed=0):
    """Sampled maxima of the Lipschitz-type ratios in (H₂), (H₃), (g), (σ).

    These are lower bounds on the true constants.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    n, T = prob.n, prob.theta
    S = samples
    t = rng.uniform(0, T, size=S)

    # (H2): Lipschitz in s with growth weight
    z = _ball(rng, S, n, alpha)
    r = _ball(rng, S, n, alpha)
    z[: S // 4] = 0.0
    r[: S // 4] = 0.0
    s1 = rng.normal(size=(S, n)) * rng.uniform(0.1, 3.0, size=(S, 1))
    s2 = s1 + rng.normal(size=(S, n)) * rng.uniform(1e-3, 1.0, size=(S, 1))
    dH = np.abs(hamiltonian_batch(prob, t, z, r, s1) - hamiltonian_batch(prob, t, z, r, s2))
    den = (1 + np.linalg.norm(z, axis=1) + np.linalg.norm(r, axis=1)) * np.linalg.norm(s1 - s2, axis=1)
    c_H, used = _ratio_max(dH, den)

    # (H3) on P(α)
    z2 = _ball(rng, S, n, alpha)
    r2 = _ball(rng, S, n, alpha)
    half = S // 2
    z2[:half] = np.clip(z[:half] + 0.05 * alpha * rng.normal(size=(half, n)), -alpha / np.sqrt(n), alpha / np.sqrt(n))
    r2[:half] = r[:half]
    s = rng.normal(size=(S, n))
    dH = np.abs(hamiltonian_batch(prob, t, z, r, s) - hamiltonian_batch(prob, t, z2, r2, s))
    den = (np.linalg.norm(z - z2, axis=1) + np.linalg.norm(r - r2, axis=1)) * (1 + np.linalg.norm(s, axis=1))
    lam_H, u2 = _ratio_max(dH, den)

    # g on [0, ϑ] × ball(α); half the pairs share the time
    x1 = _ball(rng, S, n, alpha)
    x2 = _ball(rng, S, n, alpha)
    t2 = rng.uniform(0, T, size=S)
    t2[:half] = t[:half]
    g1 = np.array([prob.g(a, b) for a, b in zip(t, x1)])
    g2 = np.array([prob.g(a, b) for a, b in zip(t2, x2)])
    dg = np.linalg.norm(g1 - g2, axis=1)
    den = np.abs(t - t2) + np.linalg.norm(x1 - x2, axis=1)
    lam_g, u3 = _ratio_max(dg, den)

    # σ on P(α); half the pairs share the history
    count = max(2, S // 8)
    num = np.empty(count)
    den = np.empty(count)
    for i in range(count):
        w1 = random_history(rng, prob.h, n, alpha)
        w2 = w1 if i % 2 == 0 else random_history(rng, prob.h, n, alpha)
        za = _ball(rng, 1, n, alpha)[0]
        zb = _ball(rng, 1, n, alpha)[0]
        num[i] = abs(prob.sigma(za, w1) - prob.sigma(zb, w2))
        den[i] = np.linalg.norm(za - zb) + (0.0 if w1 is w2 else (w1 - w2).l1)
    lam_s, u4 = _ratio_max(num, den)

    key = float(alpha)
    return Constants(c_H=c_H, lambda_H={key: lam_H}, lambda_g={key: lam_g},
                     lambda_sigma={key: lam_s}, samples_used=used + u2 + u3 + u4, seed=seed)
