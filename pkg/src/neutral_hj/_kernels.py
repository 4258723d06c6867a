"""Numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``NEUTRAL_HJ_NO_NUMBA`` is unset
(or ``0``).  Both paths share signatures; ``USING_NUMBA`` tells which is live.
"""

import os

import numpy as np

_DISABLED = os.environ.get("NEUTRAL_HJ_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag in a subprocess
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA

# 8-point Gauss-Legendre on [0, 1]
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
GL8_NODES = 0.5 * (_GL8_X + 1.0)
GL8_WEIGHTS = 0.5 * _GL8_W
# 5-point rule: exact for the degree-5 mollifier integrands
_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)
GL5_NODES = 0.5 * (_GL5_X + 1.0)
GL5_WEIGHTS = 0.5 * _GL5_W

_SMALL_SLOPE = 1e-2  # A <= _SMALL_SLOPE * C switches to quadrature (no root nearby)
_COLLINEAR = 1e-12


# ---------------------------------------------------------------------------
# ∫_0^1 ||p + t d|| dt  and  ∫_0^1 t ||p + t d|| dt  per sample interval
# ---------------------------------------------------------------------------

def _moments_numpy(samples):
    """Zeroth and first moments of ||p + t d|| on [0, 1] for consecutive sample pairs.

    samples: (N, n) array.  Returns two (N-1,) arrays.
    """
    p = samples[:-1]
    d = samples[1:] - samples[:-1]
    A = np.einsum("ij,ij->i", d, d)
    B = 2.0 * np.einsum("ij,ij->i", p, d)
    C = np.einsum("ij,ij->i", p, p)
    n = samples.shape[1]
    cross = np.zeros_like(A)
    for a in range(n):
        for b in range(a + 1, n):
            cross += (p[:, a] * d[:, b] - p[:, b] * d[:, a]) ** 2
    disc = 4.0 * cross

    I0 = np.empty_like(A)
    I1 = np.empty_like(A)

    const = A == 0.0
    quad = (~const) & (A <= _SMALL_SLOPE * C)
    coll = (~const) & (~quad) & (disc <= _COLLINEAR * 4.0 * A * np.maximum(C, 1e-300))
    gen = (~const) & (~quad) & (~coll)

    sC = np.sqrt(C)
    I0[const] = sC[const]
    I1[const] = 0.5 * sC[const]

    if quad.any():
        pts = p[quad][:, None, :] + GL8_NODES[None, :, None] * d[quad][:, None, :]
        vals = np.sqrt(np.sum(pts * pts, axis=2))
        I0[quad] = vals @ GL8_WEIGHTS
        I1[quad] = vals @ (GL8_WEIGHTS * GL8_NODES)

    if coll.any():
        sA = np.sqrt(A[coll])
        t0 = -B[coll] / (2.0 * A[coll])
        i0 = np.where(t0 <= 0.0, 0.5 - t0, np.where(t0 >= 1.0, t0 - 0.5, 0.5 * (t0 ** 2 + (1.0 - t0) ** 2)))
        mid = t0 ** 3 / 6.0 + (1.0 - t0 ** 3) / 3.0 - t0 * (1.0 - t0 ** 2) / 2.0
        i1 = np.where(t0 <= 0.0, 1.0 / 3.0 - t0 / 2.0, np.where(t0 >= 1.0, t0 / 2.0 - 1.0 / 3.0, mid))
        I0[coll] = sA * i0
        I1[coll] = sA * i1

    if gen.any():
        a, b, c, dd = A[gen], B[gen], C[gen], disc[gen]
        q1 = a + b + c
        s0, s1 = np.sqrt(c), np.sqrt(q1)
        sd = np.sqrt(dd)
        F1 = (2 * a + b) * s1 / (4 * a) + dd / (8 * a ** 1.5) * np.arcsinh((2 * a + b) / sd)
        F0 = b * s0 / (4 * a) + dd / (8 * a ** 1.5) * np.arcsinh(b / sd)
        i0 = F1 - F0
        I0[gen] = i0
        I1[gen] = (q1 * s1 - c * s0) / (3 * a) - b / (2 * a) * i0
    return I0, I1


def _moments_loop(samples):
    m = samples.shape[0] - 1
    n = samples.shape[1]
    I0 = np.empty(m)
    I1 = np.empty(m)
    for k in range(m):
        A = 0.0
        B = 0.0
        C = 0.0
        for i in range(n):
            di = samples[k + 1, i] - samples[k, i]
            A += di * di
            B += 2.0 * samples[k, i] * di
            C += samples[k, i] * samples[k, i]
        cross = 0.0
        for a in range(n):
            for b in range(a + 1, n):
                da = samples[k + 1, a] - samples[k, a]
                db = samples[k + 1, b] - samples[k, b]
                t = samples[k, a] * db - samples[k, b] * da
                cross += t * t
        disc = 4.0 * cross
        if A == 0.0:
            I0[k] = np.sqrt(C)
            I1[k] = 0.5 * np.sqrt(C)
        elif A <= _SMALL_SLOPE * C:
            s0 = 0.0
            s1 = 0.0
            for g in range(GL8_NODES.shape[0]):
                t = GL8_NODES[g]
                v = 0.0
                for i in range(n):
                    x = samples[k, i] + t * (samples[k + 1, i] - samples[k, i])
                    v += x * x
                v = np.sqrt(v)
                s0 += GL8_WEIGHTS[g] * v
                s1 += GL8_WEIGHTS[g] * t * v
            I0[k] = s0
            I1[k] = s1
        elif disc <= _COLLINEAR * 4.0 * A * max(C, 1e-300):
            sA = np.sqrt(A)
            t0 = -B / (2.0 * A)
            if t0 <= 0.0:
                I0[k] = sA * (0.5 - t0)
                I1[k] = sA * (1.0 / 3.0 - t0 / 2.0)
            elif t0 >= 1.0:
                I0[k] = sA * (t0 - 0.5)
                I1[k] = sA * (t0 / 2.0 - 1.0 / 3.0)
            else:
                I0[k] = sA * 0.5 * (t0 * t0 + (1.0 - t0) ** 2)
                I1[k] = sA * (t0 ** 3 / 6.0 + (1.0 - t0 ** 3) / 3.0 - t0 * (1.0 - t0 * t0) / 2.0)
        else:
            q1 = A + B + C
            s0 = np.sqrt(C)
            s1 = np.sqrt(q1)
            sd = np.sqrt(disc)
            F1 = (2 * A + B) * s1 / (4 * A) + disc / (8 * A ** 1.5) * np.arcsinh((2 * A + B) / sd)
            F0 = B * s0 / (4 * A) + disc / (8 * A ** 1.5) * np.arcsinh(B / sd)
            i0 = F1 - F0
            I0[k] = i0
            I1[k] = (q1 * s1 - C * s0) / (3 * A) - B / (2 * A) * i0
    return I0, I1


# ---------------------------------------------------------------------------
# Mollifier convolution
#   out(ξ) = ∫_0^1 K(s) wbar(ξ + s/j) ds,  K = β (mode 0) or β' (mode 1)
# wbar is given as linear pieces [a_p, b_p) with end values v0_p, v1_p.
# ---------------------------------------------------------------------------

BETA_NORMALIZER = 30.0


def beta(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, BETA_NORMALIZER * s ** 2 * (1.0 - s) ** 2, 0.0)


def beta_prime(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 2.0 * BETA_NORMALIZER * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0)


def _convolve_numpy(a, b, v0, v1, xi, j, mode, rtol):
    # rtol is unused: 5-point Gauss-Legendre integrates each piece exactly
    n = v0.shape[1]
    out = np.zeros((xi.shape[0], n))
    width = 1.0 / j
    for p in range(a.shape[0]):
        lo = np.maximum(0.0, j * (a[p] - xi))
        hi = np.minimum(1.0, j * (b[p] - xi))
        active = hi > lo
        if not active.any():
            continue
        lo_, hi_, x_ = lo[active], hi[active], xi[active]
        span = hi_ - lo_
        s = lo_[:, None] + span[:, None] * GL5_NODES[None, :]
        kern = beta(s) if mode == 0 else beta_prime(s)
        slope = (v1[p] - v0[p]) / (b[p] - a[p])
        pos = x_[:, None] + s * width - a[p]
        vals = v0[p][None, None, :] + pos[:, :, None] * slope[None, None, :]
        out[active] += np.einsum("qg,g,qgi->qi", kern, GL5_WEIGHTS, vals) * span[:, None]
    return out


def _kernel_value(s, mode):
    if s <= 0.0 or s >= 1.0:
        return 0.0
    if mode == 0:
        return BETA_NORMALIZER * s * s * (1.0 - s) * (1.0 - s)
    return 2.0 * BETA_NORMALIZER * s * (1.0 - s) * (1.0 - 2.0 * s)


def _piece_integrand(s, x, width, a, slope, v0, mode, out):
    k = _kernel_value(s, mode)
    pos = x + s * width - a
    for i in range(out.shape[0]):
        out[i] = k * (v0[i] + pos * slope[i])


MAX_DEPTH = 24


def _adaptive_simpson(x, width, a, slope, v0, mode, lo, hi, rtol, acc):
    n = v0.shape[0]
    max_stack = 64
    st_lo = np.empty(max_stack)
    st_hi = np.empty(max_stack)
    st_fl = np.empty((max_stack, n))
    st_fm = np.empty((max_stack, n))
    st_fh = np.empty((max_stack, n))
    st_whole = np.empty((max_stack, n))
    st_depth = np.empty(max_stack, dtype=np.int64)
    fl = np.empty(n)
    fm = np.empty(n)
    fh = np.empty(n)
    _piece_integrand(lo, x, width, a, slope, v0, mode, fl)
    _piece_integrand(0.5 * (lo + hi), x, width, a, slope, v0, mode, fm)
    _piece_integrand(hi, x, width, a, slope, v0, mode, fh)
    # quarter points too: the kernel derivative vanishes at lo, mid and hi
    fq1 = np.empty(n)
    fq3 = np.empty(n)
    _piece_integrand(0.75 * lo + 0.25 * hi, x, width, a, slope, v0, mode, fq1)
    _piece_integrand(0.25 * lo + 0.75 * hi, x, width, a, slope, v0, mode, fq3)
    scale = 0.0
    for i in range(n):
        scale = max(scale, abs(fl[i]) + abs(fm[i]) + abs(fh[i]) + abs(fq1[i]) + abs(fq3[i]))
    tol = rtol * max(scale * (hi - lo), 1e-300)
    top = 0
    st_lo[0] = lo
    st_hi[0] = hi
    for i in range(n):
        st_fl[0, i] = fl[i]
        st_fm[0, i] = fm[i]
        st_fh[0, i] = fh[i]
        st_whole[0, i] = (hi - lo) / 6.0 * (fl[i] + 4.0 * fm[i] + fh[i])
    st_depth[0] = 0
    top = 1
    flm = np.empty(n)
    fmh = np.empty(n)
    left = np.empty(n)
    right = np.empty(n)
    fl_i = np.empty(n)
    fm_i = np.empty(n)
    fh_i = np.empty(n)
    while top > 0:
        top -= 1
        l = st_lo[top]
        r = st_hi[top]
        m = 0.5 * (l + r)
        depth = st_depth[top]
        _piece_integrand(0.5 * (l + m), x, width, a, slope, v0, mode, flm)
        _piece_integrand(0.5 * (m + r), x, width, a, slope, v0, mode, fmh)
        err = 0.0
        for i in range(n):
            left[i] = (m - l) / 6.0 * (st_fl[top, i] + 4.0 * flm[i] + st_fm[top, i])
            right[i] = (r - m) / 6.0 * (st_fm[top, i] + 4.0 * fmh[i] + st_fh[top, i])
            err = max(err, abs(left[i] + right[i] - st_whole[top, i]))
        local_tol = tol * (r - l) / (hi - lo)
        if err <= 15.0 * local_tol or depth >= MAX_DEPTH or top + 2 >= max_stack:
            for i in range(n):
                acc[i] += left[i] + right[i] + (left[i] + right[i] - st_whole[top, i]) / 15.0
        else:
            for i in range(n):
                fl_i[i] = st_fl[top, i]
                fm_i[i] = st_fm[top, i]
                fh_i[i] = st_fh[top, i]
            # right half
            st_lo[top] = m
            st_hi[top] = r
            for i in range(n):
                st_fl[top, i] = fm_i[i]
                st_fm[top, i] = fmh[i]
                st_fh[top, i] = fh_i[i]
                st_whole[top, i] = right[i]
            st_depth[top] = depth + 1
            top += 1
            # left half
            st_lo[top] = l
            st_hi[top] = m
            for i in range(n):
                st_fl[top, i] = fl_i[i]
                st_fm[top, i] = flm[i]
                st_fh[top, i] = fm_i[i]
                st_whole[top, i] = left[i]
            st_depth[top] = depth + 1
            top += 1


def _convolve_loop(a, b, v0, v1, xi, j, mode, rtol):
    n = v0.shape[1]
    out = np.zeros((xi.shape[0], n))
    width = 1.0 / j
    npieces = a.shape[0]
    acc = np.empty(n)
    for q in range(xi.shape[0]):
        x = xi[q]
        for i in range(n):
            acc[i] = 0.0
        # first piece whose end exceeds x
        p = np.searchsorted(b, x, side="right")
        while p < npieces and a[p] < x + width:
            lo = max(0.0, j * (a[p] - x))
            hi = min(1.0, j * (b[p] - x))
            if hi > lo:
                slope = (v1[p] - v0[p]) / (b[p] - a[p])
                _adaptive_simpson(x, width, a[p], slope, v0[p], mode, lo, hi, rtol, acc)
            p += 1
        for i in range(n):
            out[q, i] = acc[i]
    return out


if HAVE_NUMBA:
    _moments_jit = njit(cache=True)(_moments_loop)
    _kernel_value = njit(cache=True)(_kernel_value)
    _piece_integrand = njit(cache=True)(_piece_integrand)
    _adaptive_simpson = njit(cache=True)(_adaptive_simpson)
    _convolve_jit = njit(cache=True)(_convolve_loop)


def norm_moments(samples, use_numba=None):
    """Per-interval (∫‖p+td‖dt, ∫t‖p+td‖dt) over t∈[0,1] for a (N, n) sample array."""
    samples = np.ascontiguousarray(samples, dtype=float)
    if samples.shape[0] < 2:
        return np.zeros(0), np.zeros(0)
    if USING_NUMBA if use_numba is None else use_numba:
        return _moments_jit(samples)
    return _moments_numpy(samples)


def convolve_pieces(a, b, v0, v1, xi, j, mode=0, rtol=1e-8, use_numba=None):
    """Mollifier convolution of a piecewise-linear path at the points ``xi``.

    The numba path runs adaptive Simpson at relative tolerance ``rtol``; the
    numpy path uses a 5-point Gauss-Legendre rule that is exact for the
    polynomial integrands, which makes it an independent reference.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    v0 = np.ascontiguousarray(v0, dtype=float)
    v1 = np.ascontiguousarray(v1, dtype=float)
    xi = np.ascontiguousarray(xi, dtype=float)
    if USING_NUMBA if use_numba is None else use_numba:
        return _convolve_jit(a, b, v0, v1, xi, float(j), int(mode), float(rtol))
    return _convolve_numpy(a, b, v0, v1, xi, float(j), int(mode), rtol)
