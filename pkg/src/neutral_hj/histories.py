"""Piecewise-linear histories on [-h, 0), trajectories extending them, and
the operations on them: norms, one-sided evaluation, shifts, constant
extension, the four-term metric ``upsilon`` and kernel mollification.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SMOOTHNESS_RTOL = 1e-6
_JUMP_TOL = 1e-12
_TIME_TOL = 1e-12
# times within this distance of a breakpoint are treated as on it (shifted grids round)
_SNAP = 1e-11


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class NotInPLipStar(ValueError):
    """History is not certified continuously differentiable near -h."""


def _as_matrix(samples, n=None):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if n in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("samples must be a non-empty (N, n) array")
    return arr


class History:
    """A right-continuous piecewise-linear function on [-h, 0).

    Each segment holds a uniform grid of samples spanning ``[start, end]``
    where ``end`` is the next segment's start (or 0); the last sample of a
    segment is the left limit at its end.  A single-sample segment is constant.
    """

    def __init__(self, h, segments, delta_w=None, start_slope=None):
        self.h = float(h)
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not segments:
            raise ValueError("a history needs at least one segment")
        starts = []
        samples = []
        n = None
        for start, smp in segments:
            arr = _as_matrix(smp, n)
            if n is None:
                n = arr.shape[1]
            elif arr.shape[1] != n:
                raise ValueError("segments disagree on the state dimension")
            starts.append(float(start))
            arr = arr.copy()
            arr.setflags(write=False)
            samples.append(arr)
        starts = np.array(starts)
        if abs(starts[0] + self.h) > _TIME_TOL * max(1.0, self.h):
            raise ValueError("first segment must start at -h")
        starts[0] = -self.h
        if np.any(np.diff(starts) <= 0) or starts[-1] >= 0:
            raise ValueError("segment starts must increase strictly inside [-h, 0)")
        if not all(np.all(np.isfinite(s)) for s in samples):
            raise ValueError("history samples must be finite")
        starts.setflags(write=False)
        self.starts = starts
        self.samples = tuple(samples)
        self.n = n
        ends = np.append(starts[1:], 0.0)
        ends.setflags(write=False)
        self.ends = ends

        certified = self._certified_width()
        if delta_w is None:
            delta_w = certified
        delta_w = float(delta_w)
        if delta_w < 0:
            raise ValueError("delta_w must be nonnegative")
        if delta_w > certified * (1 + 1e-9) + 1e-15:
            raise ValueError(
                f"delta_w={delta_w} exceeds the certified smooth width {certified}")
        self.delta_w = delta_w
        if start_slope is not None:
            start_slope = np.asarray(start_slope, dtype=float).reshape(n)
            start_slope.setflags(write=False)
        self.start_slope = start_slope

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, h, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(h, [(-h, value[None, :])])

    @classmethod
    def linear(cls, h, slope, offset=0.0):
        """w(ξ) = slope·ξ + offset."""
        slope = np.atleast_1d(np.asarray(slope, dtype=float))
        offset = np.broadcast_to(np.asarray(offset, dtype=float), slope.shape)
        smp = np.stack([offset - slope * h, offset])
        return cls(h, [(-h, smp)], start_slope=slope)

    @classmethod
    def step(cls, h, breaks, values):
        """Piecewise constant: ``values[0]`` on [-h, breaks[0]), and so on."""
        values = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
        if len(values) != len(breaks) + 1:
            raise ValueError("step needs len(values) == len(breaks) + 1")
        starts = [-h] + [float(b) for b in breaks]
        return cls(h, [(s, v[None, :]) for s, v in zip(starts, values)])

    @classmethod
    def from_samples(cls, h, samples, delta_w=None):
        return cls(h, [(-h, samples)], delta_w=delta_w)

    @classmethod
    def from_function(cls, h, fn, num=65, breaks=()):
        """Sample ``fn`` on a uniform grid per piece.

        ``fn(lo, hi, xs)`` must return the samples of the piece [lo, hi) at
        ``xs`` with the last entry being the left limit at ``hi``.
        """
        edges = [-h] + [float(b) for b in breaks] + [0.0]
        segs = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            xs = np.linspace(lo, hi, num)
            segs.append((lo, np.asarray(fn(lo, hi, xs), dtype=float).reshape(num, -1)))
        return cls(h, segs)

    @classmethod
    def from_pieces(cls, h, a, b, v0, v1, delta_w=None, start_slope=None):
        """Pack contiguous linear pieces into uniform segments.

        Consecutive pieces merge when they join continuously and have equal
        lengths; anything else opens a new segment.
        """
        keep = (b - a) > _TIME_TOL * h
        a, b, v0, v1 = a[keep], b[keep], v0[keep], v1[keep]
        if a.size == 0:
            raise ValueError("no pieces of positive length")
        segs = []
        cur_start = a[0]
        cur = [v0[0], v1[0]]
        cur_len = b[0] - a[0]
        for i in range(1, a.size):
            length = b[i] - a[i]
            scale = 1.0 + float(np.max(np.abs(v1[i - 1])))
            continuous = float(np.max(np.abs(v0[i] - v1[i - 1]))) <= _JUMP_TOL * scale
            if continuous and abs(length - cur_len) <= 1e-9 * cur_len:
                cur.append(v1[i])
            else:
                segs.append((cur_start, np.array(cur)))
                cur_start = a[i]
                cur = [v0[i], v1[i]]
                cur_len = length
        segs.append((cur_start, np.array(cur)))
        return cls(h, segs, delta_w=delta_w, start_slope=start_slope)

    # -- structure -------------------------------------------------------------

    def _certified_width(self):
        smp = self.samples[0]
        length = self.ends[0] - self.starts[0]
        if smp.shape[0] == 1:
            return float(length)
        dt = length / (smp.shape[0] - 1)
        q = np.diff(smp, axis=0) / dt
        qmax = float(np.max(np.linalg.norm(q, axis=1)))
        tol = SMOOTHNESS_RTOL * (1.0 + qmax)
        jumps = np.linalg.norm(np.diff(q, axis=0), axis=1)
        bad = np.nonzero(jumps >= tol)[0]
        run = q.shape[0] if bad.size == 0 else int(bad[0]) + 1
        return float(run * dt)

    @property
    def breakpoints(self):
        """Segment boundaries inside (-h, 0)."""
        return np.array(self.starts[1:])

    def jumps(self):
        """Boundaries where the left limit differs from the value."""
        out = []
        for k in range(1, len(self.starts)):
            left = self.samples[k - 1][-1]
            right = self.samples[k][0]
            if np.max(np.abs(left - right)) > _JUMP_TOL * (1 + np.max(np.abs(left))):
                out.append(self.starts[k])
        return np.array(out)

    def pieces(self):
        """Linear pieces (a, b, v0, v1) covering [-h, 0); v1 is a left limit."""
        a, b, v0, v1 = [], [], [], []
        for s, e, smp in zip(self.starts, self.ends, self.samples):
            if smp.shape[0] == 1:
                a.append(s)
                b.append(e)
                v0.append(smp[0])
                v1.append(smp[0])
                continue
            knots = np.linspace(s, e, smp.shape[0])
            a.extend(knots[:-1])
            b.extend(knots[1:])
            v0.extend(smp[:-1])
            v1.extend(smp[1:])
        return np.array(a), np.array(b), np.array(v0), np.array(v1)

    def knots(self):
        """All piece endpoints in [-h, 0]."""
        a, b, _, _ = self.pieces()
        return np.union1d(a, b)

    # -- evaluation ------------------------------------------------------------

    def _segment_value(self, k, xi):
        smp = self.samples[k]
        if smp.shape[0] == 1:
            return smp[0].copy()
        s, e = self.starts[k], self.ends[k]
        pos = (xi - s) / (e - s) * (smp.shape[0] - 1)
        i = min(int(math.floor(pos)), smp.shape[0] - 2)
        i = max(i, 0)
        frac = pos - i
        return (1.0 - frac) * smp[i] + frac * smp[i + 1]

    def eval(self, xi, side="right"):
        """w(ξ) (``side='right'``) or the left limit w(ξ-0) (``side='left'``)."""
        xi = float(xi)
        if side == "right":
            if not (-self.h - _TIME_TOL * self.h <= xi < 0.0):
                raise DomainError(f"right evaluation needs ξ in [-h, 0), got {xi}")
            xi = max(xi, -self.h)
            k = int(np.searchsorted(self.starts, xi + _SNAP * self.h, side="right")) - 1
            return self._segment_value(k, max(xi, self.starts[k]))
        if side == "left":
            if not (-self.h < xi <= 0.0):
                raise DomainError(f"left evaluation needs ξ in (-h, 0], got {xi}")
            k = max(int(np.searchsorted(self.starts, xi - _SNAP * self.h, side="left")) - 1, 0)
            if abs(xi - self.ends[k]) <= _SNAP * self.h:
                return self.samples[k][-1].copy()
            return self._segment_value(k, xi)
        raise ValueError(f"unknown side {side!r}")

    __call__ = eval

    def eval_many(self, xi):
        """Right values at an array of points in [-h, 0)."""
        xi = np.asarray(xi, dtype=float)
        out = np.empty(xi.shape + (self.n,))
        flat = xi.ravel()
        res = out.reshape(-1, self.n)
        seg = np.clip(np.searchsorted(self.starts, flat + _SNAP * self.h, side="right") - 1, 0, len(self.starts) - 1)
        for k in np.unique(seg):
            sel = seg == k
            smp = self.samples[k]
            if smp.shape[0] == 1:
                res[sel] = smp[0]
                continue
            grid = np.linspace(self.starts[k], self.ends[k], smp.shape[0])
            for i in range(self.n):
                res[sel, i] = np.interp(flat[sel], grid, smp[:, i])
        return out

    @property
    def left_end(self):
        """w(-0)."""
        return self.samples[-1][-1].copy()

    @property
    def at_start(self):
        """w(-h)."""
        return self.samples[0][0].copy()

    # -- norms -----------------------------------------------------------------

    def norms(self):
        """(‖w‖₁, ‖w‖_∞) computed exactly for the interpolant."""
        l1 = 0.0
        sup = 0.0
        for s, e, smp in zip(self.starts, self.ends, self.samples):
            sup = max(sup, float(np.max(np.linalg.norm(smp, axis=1))))
            if smp.shape[0] == 1:
                l1 += (e - s) * float(np.linalg.norm(smp[0]))
            else:
                dt = (e - s) / (smp.shape[0] - 1)
                i0, _ = _kernels.norm_moments(smp)
                l1 += dt * float(np.sum(i0))
        return l1, sup

    @property
    def l1(self):
        return self.norms()[0]

    @property
    def sup(self):
        return self.norms()[1]

    def weighted_l1(self, c0, c1):
        """∫ (c0 + c1·ξ) ‖w(ξ)‖ dξ over [-h, 0), exact for the interpolant."""
        total = 0.0
        for s, e, smp in zip(self.starts, self.ends, self.samples):
            if smp.shape[0] == 1:
                nv = float(np.linalg.norm(smp[0]))
                total += nv * (c0 * (e - s) + 0.5 * c1 * (e * e - s * s))
                continue
            dt = (e - s) / (smp.shape[0] - 1)
            i0, i1 = _kernels.norm_moments(smp)
            left = s + dt * np.arange(smp.shape[0] - 1)
            total += dt * float(np.sum((c0 + c1 * left) * i0 + c1 * dt * i1))
        return total

    def integral(self):
        """∫ w(ξ) dξ over [-h, 0) (trapezoidal, exact for the interpolant)."""
        a, b, v0, v1 = self.pieces()
        return ((b - a)[:, None] * 0.5 * (v0 + v1)).sum(axis=0)

    # -- arithmetic ----------------------------------------------------------------

    def _combine(self, other, op):
        if not isinstance(other, History):
            return NotImplemented
        if abs(other.h - self.h) > _TIME_TOL * self.h or other.n != self.n:
            raise ValueError("histories must share h and dimension")
        pts = np.union1d(self.knots(), other.knots())
        pts = pts[(pts >= -self.h) & (pts <= 0.0)]
        a, b = pts[:-1], pts[1:]
        keep = (b - a) > _TIME_TOL * self.h
        a, b = a[keep], b[keep]
        mids = 0.5 * (a + b)
        v0 = np.empty((a.size, self.n))
        v1 = np.empty((a.size, self.n))
        for i in range(a.size):
            v0[i] = op(self.eval(a[i]), other.eval(a[i]))
            v1[i] = op(self._segment_value(self._seg_of(mids[i]), b[i]),
                       other._segment_value(other._seg_of(mids[i]), b[i]))
        return History.from_pieces(self.h, a, b, v0, v1)

    def _seg_of(self, xi):
        return int(np.searchsorted(self.starts, xi, side="right")) - 1

    def __sub__(self, other):
        return self._combine(other, lambda x, y: x - y)

    def __add__(self, other):
        return self._combine(other, lambda x, y: x + y)

    def scale(self, factor):
        return History(self.h, [(s, factor * smp) for s, smp in zip(self.starts, self.samples)],
                       delta_w=self.delta_w,
                       start_slope=None if self.start_slope is None else factor * self.start_slope)

    def allclose(self, other, atol=1e-12):
        """Functional equality, checking right values and left limits at all knots."""
        if abs(other.h - self.h) > _TIME_TOL * self.h or other.n != self.n:
            return False
        pts = np.union1d(self.knots(), other.knots())
        for x in pts:
            if x < 0 and not np.allclose(self.eval(x), other.eval(x), atol=atol, rtol=0):
                return False
            if x > -self.h and not np.allclose(self.eval(x, "left"), other.eval(x, "left"), atol=atol, rtol=0):
                return False
        return True

    # -- serialization -----------------------------------------------------------

    def to_dict(self):
        out = {
            "h": self.h,
            "segments": [{"start": float(s), "samples": smp.tolist()}
                         for s, smp in zip(self.starts, self.samples)],
            "delta_w": self.delta_w,
        }
        if self.start_slope is not None:
            out["start_slope"] = self.start_slope.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            segs = [(seg["start"], seg["samples"]) for seg in data["segments"]]
            return cls(data["h"], segs, delta_w=data.get("delta_w"),
                       start_slope=data.get("start_slope"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed history record: {exc}") from exc

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (f"History(h={self.h}, n={self.n}, segments={len(self.starts)}, "
                f"delta_w={self.delta_w:.3g})")


@dataclass(frozen=True)
class PathPoint:
    """A point (τ, z, w) of the path space."""

    tau: float
    z: np.ndarray
    w: History

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float)).copy()
        if z.shape != (self.w.n,):
            raise ValueError(f"z has shape {z.shape}, history dimension is {self.w.n}")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "tau", float(self.tau))
        if self.tau < 0:
            raise DomainError("τ must be nonnegative")

    @property
    def h(self):
        return self.w.h

    @property
    def interior_flag(self):
        """True iff τ lies strictly inside some (ih, (i+1)h) and w is C¹-certified at -h."""
        r = self.tau / self.h
        on_grid = abs(r - round(r)) <= 1e-12 * max(1.0, r)
        return (not on_grid) and self.w.delta_w > 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A path on [τ-h, ϑ]: the origin history, then piecewise-linear data.

    ``values[k]`` is x(t_k) and ``left[k]`` the left limit x(t_k - 0);
    ``left[0]`` equals w(-0).  ``y`` holds the reduced path when known.
    """

    origin: PathPoint
    grid: np.ndarray
    values: np.ndarray
    left: np.ndarray
    y: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("trajectory grid must be strictly increasing with >= 2 nodes")
        if abs(grid[0] - self.origin.tau) > _TIME_TOL * max(1.0, abs(grid[0])):
            raise ValueError("trajectory grid must start at τ")

    @property
    def tau(self):
        return self.origin.tau

    @property
    def end(self):
        return float(self.grid[-1])

    @property
    def h(self):
        return self.origin.h

    @property
    def n(self):
        return self.origin.w.n

    def eval(self, t, side="right"):
        t = float(t)
        tau = self.tau
        near = abs(t - tau) <= _SNAP * self.h
        if near:
            if side == "left":
                return self.origin.w.eval(0.0, "left")
            t = tau
        elif t < tau:
            return self.origin.w.eval(t - tau, side)
        if t > self.end + _TIME_TOL * max(1.0, self.end):
            raise DomainError(f"t={t} beyond the trajectory end {self.end}")
        t = min(t, self.end)
        snap = _SNAP * self.h
        if side == "left":
            j = int(np.searchsorted(self.grid, t - snap, side="left"))
            if j < self.grid.size and abs(self.grid[j] - t) <= snap:
                return self.left[j].copy()
            k = j - 1
        else:
            # times within the snapping band of a node are the node
            k = int(np.searchsorted(self.grid, t + snap, side="right")) - 1
            t = max(t, self.grid[k])
        if k >= self.grid.size - 1:
            return self.values[-1].copy()
        frac = (t - self.grid[k]) / (self.grid[k + 1] - self.grid[k])
        return (1.0 - frac) * self.values[k] + frac * self.left[k + 1]

    __call__ = eval

    def eval_many(self, ts):
        """Right values at an array of times in [τ-h, ϑ]."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty((ts.size, self.n))
        before = ts < self.tau - _SNAP * self.h
        if before.any():
            out[before] = self.origin.w.eval_many(ts[before] - self.tau)
        idx = np.nonzero(~before)[0]
        if idx.size:
            t = np.clip(ts[idx], self.tau, self.end)
            k = np.clip(np.searchsorted(self.grid, t + _SNAP * self.h, side="right") - 1, 0, self.grid.size - 2)
            t = np.maximum(t, self.grid[k])
            frac = (t - self.grid[k]) / (self.grid[k + 1] - self.grid[k])
            out[idx] = (1.0 - frac)[:, None] * self.values[k] + frac[:, None] * self.left[k + 1]
            at_end = t >= self.end
            out[idx[at_end]] = self.values[-1]
        return out

    def pieces(self, lo, hi):
        """Linear pieces of the path on [lo, hi) with lo >= τ."""
        g = self.grid
        pts = np.concatenate([[lo], g[(g > lo) & (g < hi)], [hi]])
        a, b = pts[:-1], pts[1:]
        keep = b - a > 0
        a, b = a[keep], b[keep]
        v0 = np.array([self.eval(x) for x in a]).reshape(-1, self.n)
        v1 = np.array([self.eval(x, "left") for x in b]).reshape(-1, self.n)
        return a, b, v0, v1

    def to_rows(self):
        rows = []
        for k, t in enumerate(self.grid):
            yv = self.y[k] if self.y is not None else np.full(self.n, np.nan)
            rows.append((float(t), self.values[k].tolist(), yv.tolist()))
        return rows


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def norms(w):
    return w.norms()


def evaluate(w, xi, side="right"):
    return w.eval(xi, side)


def shift(x, t):
    """The history ξ ↦ x(t + ξ) on [-h, 0)."""
    tau, h = x.tau, x.h
    t = float(t)
    if t < tau - _TIME_TOL * max(1.0, tau) or t > x.end + _TIME_TOL * max(1.0, x.end):
        raise DomainError(f"shift time {t} outside [{tau}, {x.end}]")
    t = min(max(t, tau), x.end)
    if t == tau:
        return x.origin.w
    parts = []
    lo = t - h
    if lo < tau:
        a, b, v0, v1 = x.origin.w.pieces()
        a, b = a + tau, b + tau
        sel = b > lo
        a, b, v0, v1 = a[sel], b[sel], v0[sel], v1[sel]
        # clip the first piece at lo
        if a[0] < lo:
            frac = (lo - a[0]) / (b[0] - a[0])
            v0 = v0.copy()
            v0[0] = (1 - frac) * v0[0] + frac * v1[0]
            a = a.copy()
            a[0] = lo
        parts.append((a, b, v0, v1))
        parts.append(x.pieces(tau, t))
    else:
        parts.append(x.pieces(lo, t))
    a = np.concatenate([p[0] for p in parts]) - t
    b = np.concatenate([p[1] for p in parts]) - t
    v0 = np.concatenate([p[2] for p in parts])
    v1 = np.concatenate([p[3] for p in parts])
    b[-1] = 0.0
    a[0] = -h
    return History.from_pieces(h, a, b, v0, v1)


def extend_constant(p, horizon):
    """The trajectory equal to w before τ and to z on [τ, horizon]."""
    if horizon <= p.tau:
        raise DomainError("constant extension needs horizon > τ")
    grid = np.array([p.tau, float(horizon)])
    values = np.stack([p.z, p.z])
    left = np.stack([p.w.left_end, p.z])
    return Trajectory(p, grid, values, left)


def upsilon_index_point(tau, h):
    """The point ih - τ with τ ∈ (ih, (i+1)h]; τ = 0 maps to -h."""
    r = tau / h
    i = int(math.ceil(r - 1e-12)) - 1
    return max(i * h - tau, -h)


def upsilon(tau, z, w):
    """‖z‖ + ‖w‖₁ + ‖w(-h)‖ + ‖w(ih - τ)‖."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pt = upsilon_index_point(float(tau), w.h)
    return (float(np.linalg.norm(z)) + w.l1 + float(np.linalg.norm(w.at_start))
            + float(np.linalg.norm(w.eval(pt))))


def mollify_grid_size(h, j):
    return max(65, int(math.ceil(16 * j * h)) + 1)


def _extended_pieces(z, w):
    a, b, v0, v1 = w.pieces()
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return (np.append(a, 0.0), np.append(b, 1.0),
            np.vstack([v0, z[None, :]]), np.vstack([v1, z[None, :]]))


def mollify(z, w, j, num=None, rtol=1e-8):
    """Convolve the path (w on [-h,0), z on [0,1]) with the scaled kernel.

    Returns a single-segment history sampled on ``num`` uniform points, with
    the analytic right derivative at -h attached.
    """
    j = int(j)
    if j < 1:
        raise ValueError("mollification index j must be >= 1")
    h = w.h
    num = mollify_grid_size(h, j) if num is None else int(num)
    a, b, v0, v1 = _extended_pieces(z, w)
    xi = np.linspace(-h, 0.0, num)
    vals = _kernels.convolve_pieces(a, b, v0, v1, xi, j, mode=0, rtol=rtol)
    slope = -j * _kernels.convolve_pieces(a, b, v0, v1, xi[:1], j, mode=1, rtol=rtol)[0]
    return History(h, [(-h, vals)], start_slope=slope)


def mollified_derivative(z, w, j, xi, rtol=1e-8):
    """Analytic derivative of the mollified path at points ``xi``."""
    a, b, v0, v1 = _extended_pieces(z, w)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return -int(j) * _kernels.convolve_pieces(a, b, v0, v1, xi, j, mode=1, rtol=rtol)


def right_derivative_at_start(w):
    """d⁺w(-h)/dξ; requires a C¹-certified first segment."""
    if w.delta_w <= 0:
        raise NotInPLipStar("history is not certified smooth at -h (delta_w = 0)")
    if w.start_slope is not None:
        return np.array(w.start_slope)
    smp = w.samples[0]
    if smp.shape[0] == 1:
        return np.zeros(w.n)
    dt = (w.ends[0] - w.starts[0]) / (smp.shape[0] - 1)
    return (smp[1] - smp[0]) / dt


def random_history(rng, h, n, alpha, max_segments=3, jumps=True, min_first=0.1, max_samples=4):
    """A random piecewise-linear history with ‖w‖_∞ <= α.

    The first segment is linear over at least ``min_first``·h so the result is
    certified smooth at -h.
    """
    nseg = int(rng.integers(1, max_segments + 1))
    inner = np.sort(rng.uniform(-h + min_first * h, -0.05 * h, size=nseg - 1))
    starts = np.concatenate([[-h], inner])
    segs = []
    prev = None
    for k, s in enumerate(starts):
        count = 2 if k == 0 else int(rng.integers(1, max_samples + 1))
        smp = rng.uniform(-1.0, 1.0, size=(count, n))
        if prev is not None and not (jumps and rng.uniform() < 0.6):
            smp[0] = prev
        norms = np.linalg.norm(smp, axis=1, keepdims=True)
        smp = np.where(norms > 1.0, smp / np.maximum(norms, 1e-300), smp)
        smp = alpha * smp
        prev = smp[-1] / alpha if alpha > 0 else smp[-1]
        segs.append((s, smp))
    return History(h, segs)
