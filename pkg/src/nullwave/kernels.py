"""Compiled node sweeps for the time stepper.

All kernels act on the rows ``lo <= i < hi`` and, in row ``i``, on the
columns ``cols[i, 0] <= j < cols[i, 1]`` (a disk-shaped window); every other
node is left untouched. Row-wise statistics are written to ``stats[i, :]`` and reduced
by the caller, which keeps the parallel loops free of shared reductions and the
results independent of the thread count.

``order`` selects second- or fourth-order centered spatial stencils; the
fourth-order ones reach two nodes out, which the two-node zero frame allows.
"""

import math
import warnings

import numpy as np
from numba import njit, prange
from numba.core.errors import NumbaWarning

# an old system TBB only means numba falls back to its OpenMP or workqueue layer
warnings.filterwarnings("ignore", message="The TBB threading layer", category=NumbaWarning)

# columns of the per-row statistics array
UPDATE, DEN_MIN, DEN_MAX, GRAD_MAX, ACC_MAX = range(5)
N_STATS = 5


@njit(inline="always")
def _first(fm2, fm1, fp1, fp2, h, order):
    if order == 2:
        return (fp1 - fm1) / (2.0 * h)
    return (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h)


@njit(inline="always")
def _second(fm2, fm1, f0, fp1, fp2, h, order):
    if order == 2:
        return (fp1 - 2.0 * f0 + fm1) / (h * h)
    return (16.0 * (fp1 + fm1) - 30.0 * f0 - (fp2 + fm2)) / (12.0 * h * h)


@njit(inline="always")
def _d1(f, i, j, h, order):
    return _first(f[i - 2, j], f[i - 1, j], f[i + 1, j], f[i + 2, j], h, order)


@njit(inline="always")
def _d2(f, i, j, h, order):
    return _first(f[i, j - 2], f[i, j - 1], f[i, j + 1], f[i, j + 2], h, order)


@njit(inline="always")
def _d12(f, i, j, h, order):
    if order == 2:
        return (f[i + 1, j + 1] - f[i + 1, j - 1] - f[i - 1, j + 1] + f[i - 1, j - 1]) / (4.0 * h * h)
    return _first(_d2(f, i - 2, j, h, order), _d2(f, i - 1, j, h, order),
                  _d2(f, i + 1, j, h, order), _d2(f, i + 2, j, h, order), h, order)


@njit(parallel=True, cache=True)
def velocity_estimate(cur, prev, acc, dt, lo, hi, cols, out):
    """``u_t ~ (u^n - u^{n-1})/dt + dt/2 a^n`` on the window."""
    inv = 1.0 / dt
    half = 0.5 * dt
    for i in prange(lo, hi):
        for j in range(cols[i, 0], cols[i, 1]):
            out[i, j] = (cur[i, j] - prev[i, j]) * inv + half * acc[i, j]


# layout of the per-step term array filled by prepare_terms
LIN, P0, A01, A02, DEN, GRAD = range(6)
N_TERMS = 6


@njit(parallel=True, cache=True)
def prepare_terms(cur, g, h, order, lo, hi, cols, src, use_src, terms):
    """Split the right-hand side into the parts that do not involve ``u_t``.

    With ``du0 = u_t`` the nodewise equation reads
    ``(DEN - g000 du0) a = LIN + du0 P0 + (2 g001 du0 + A01) d1 u_t + (2 g002 du0 + A02) d2 u_t``,
    and ``cur`` is fixed while the acceleration is iterated, so these terms
    are computed once per step.
    """
    # the mixed derivative is the widest stencil; skip it when no coefficient uses it
    mixed = g[0, 1, 2] != 0.0 or g[1, 1, 2] != 0.0 or g[2, 1, 2] != 0.0
    for i in prange(lo, hi):
        for j in range(cols[i, 0], cols[i, 1]):
            c = cur[i, j]
            du1 = _d1(cur, i, j, h, order)
            du2 = _d2(cur, i, j, h, order)
            d11 = _second(cur[i - 2, j], cur[i - 1, j], c, cur[i + 1, j], cur[i + 2, j], h, order)
            d22 = _second(cur[i, j - 2], cur[i, j - 1], c, cur[i, j + 1], cur[i, j + 2], h, order)
            d12 = _d12(cur, i, j, h, order) if mixed else 0.0
            lin = d11 + d22
            for k in range(1, 3):
                dk = du1 if k == 1 else du2
                lin += dk * (g[k, 1, 1] * d11 + 2.0 * g[k, 1, 2] * d12 + g[k, 2, 2] * d22)
            if use_src:
                lin += src[i, j]
            terms[LIN, i, j] = lin
            terms[P0, i, j] = g[0, 1, 1] * d11 + 2.0 * g[0, 1, 2] * d12 + g[0, 2, 2] * d22
            terms[A01, i, j] = 2.0 * (g[1, 0, 1] * du1 + g[2, 0, 1] * du2)
            terms[A02, i, j] = 2.0 * (g[1, 0, 2] * du1 + g[2, 0, 2] * du2)
            terms[DEN, i, j] = 1.0 - g[1, 0, 0] * du1 - g[2, 0, 0] * du2
            terms[GRAD, i, j] = max(abs(du1), abs(du2))


@njit(parallel=True, cache=True)
def acceleration_sweep(ut, acc_old, terms, g, h, order, lo, hi, cols, acc_new, stats):
    """Nodewise solve of ``(1 - g^{k00} d_k u) u_tt = lap u + sum_{(ij)!=(00)} g^{kij} d_k u d_ij u``
    for the velocity ``ut``, given the terms from :func:`prepare_terms`."""
    g000 = g[0, 0, 0]
    c01 = 2.0 * g[0, 0, 1]
    c02 = 2.0 * g[0, 0, 2]
    for i in prange(lo, hi):
        upd = 0.0
        dmin = np.inf
        dmax = -np.inf
        gmax = 0.0
        amax = 0.0
        for j in range(cols[i, 0], cols[i, 1]):
            du0 = ut[i, j]
            d01 = _d1(ut, i, j, h, order)
            d02 = _d2(ut, i, j, h, order)
            rhs = (terms[LIN, i, j] + du0 * terms[P0, i, j]
                   + (c01 * du0 + terms[A01, i, j]) * d01
                   + (c02 * du0 + terms[A02, i, j]) * d02)
            den = terms[DEN, i, j] - g000 * du0
            a = rhs / den
            acc_new[i, j] = a
            diff = abs(a - acc_old[i, j])
            if not diff <= upd:
                upd = diff
            if den < dmin:
                dmin = den
            if den > dmax:
                dmax = den
            gr = max(abs(du0), terms[GRAD, i, j])
            if gr > gmax:
                gmax = gr
            if abs(a) > amax:
                amax = abs(a)
        stats[i, UPDATE] = upd
        stats[i, DEN_MIN] = dmin
        stats[i, DEN_MAX] = dmax
        stats[i, GRAD_MAX] = gmax
        stats[i, ACC_MAX] = amax


@njit(parallel=True, cache=True)
def leapfrog(cur, prev, acc, dt, lo, hi, cols, out):
    """``u^{n+1} = 2u^n - u^{n-1} + dt^2 a^n``."""
    dt2 = dt * dt
    for i in prange(lo, hi):
        for j in range(cols[i, 0], cols[i, 1]):
            out[i, j] = 2.0 * cur[i, j] - prev[i, j] + dt2 * acc[i, j]


# -- whole-array stencils for the diagnostics ----------------------------------------

@njit(cache=True)
def weights(deriv, order, h):
    """Centered 1D difference weights at offsets ``-order//2 .. order//2``."""
    if deriv == 1:
        w = [-0.5, 0.0, 0.5] if order == 2 else [1 / 12, -8 / 12, 0.0, 8 / 12, -1 / 12]
        return np.array(w) / h
    w = [1.0, -2.0, 1.0] if order == 2 else [-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12]
    return np.array(w) / (h * h)


@njit(cache=True)
def _rows(f, c, along_j, add, out):
    # out[k, i, j] (+)= sum_s c[s] f at offset s - w along j or i, one pass per row
    K, n, m = f.shape
    w = (c.shape[0] - 1) // 2
    c0, c1, c2 = c[0], c[1], c[2]
    c3 = c[3] if w == 2 else 0.0
    c4 = c[4] if w == 2 else 0.0
    tmp = np.empty(m)
    for k in range(K):
        if not add:
            for i in range(w):
                out[k, i, :] = 0.0
                out[k, n - 1 - i, :] = 0.0
        for i in range(w, n - w):
            if along_j:
                a = f[k, i]
                if w == 1:
                    for j in range(w, m - w):
                        tmp[j] = c0 * a[j - 1] + c1 * a[j] + c2 * a[j + 1]
                else:
                    for j in range(w, m - w):
                        tmp[j] = c0 * a[j - 2] + c1 * a[j - 1] + c2 * a[j] + c3 * a[j + 1] + c4 * a[j + 2]
            elif w == 1:
                am, a0, ap = f[k, i - 1], f[k, i], f[k, i + 1]
                for j in range(w, m - w):
                    tmp[j] = c0 * am[j] + c1 * a0[j] + c2 * ap[j]
            else:
                amm, am, a0, ap, app = f[k, i - 2], f[k, i - 1], f[k, i], f[k, i + 1], f[k, i + 2]
                for j in range(w, m - w):
                    tmp[j] = c0 * amm[j] + c1 * am[j] + c2 * a0[j] + c3 * ap[j] + c4 * app[j]
            row = out[k, i]
            if add:
                for j in range(w, m - w):
                    row[j] += tmp[j]
            else:
                for j in range(w):
                    row[j] = 0.0
                    row[m - 1 - j] = 0.0
                for j in range(w, m - w):
                    row[j] = tmp[j]


@njit(cache=True)
def staggered_pair(a, b, dt, h, order):
    """``h^2 sum ((b - a)/dt)^2 - a lap_h b`` over the nodes where ``lap_h`` is defined."""
    n, m = a.shape
    w = order // 2
    c = weights(2, order, h)
    inv = 1.0 / dt
    total = 0.0
    for i in range(n):
        for j in range(m):
            d = (b[i, j] - a[i, j]) * inv
            total += d * d
            if i < w or i >= n - w or j < w or j >= m - w:
                continue
            if w == 1:
                lap = (c[0] * (b[i - 1, j] + b[i + 1, j] + b[i, j - 1] + b[i, j + 1])
                       + 2.0 * c[1] * b[i, j])
            else:
                lap = (c[0] * (b[i - 2, j] + b[i + 2, j] + b[i, j - 2] + b[i, j + 2])
                       + c[1] * (b[i - 1, j] + b[i + 1, j] + b[i, j - 1] + b[i, j + 1])
                       + 2.0 * c[2] * b[i, j])
            total -= a[i, j] * lap
    return total * h * h


@njit(cache=True)
def time_diff(lm2, lm1, lp1, lp2, dt, order, out):
    """Centered first time derivative from the levels around one time."""
    n, m = out.shape
    if order == 2:
        inv = 1.0 / (2.0 * dt)
        for i in range(n):
            for j in range(m):
                out[i, j] = (lp1[i, j] - lm1[i, j]) * inv
    else:
        inv = 1.0 / (12.0 * dt)
        for i in range(n):
            for j in range(m):
                out[i, j] = (8.0 * (lp1[i, j] - lm1[i, j]) - (lp2[i, j] - lm2[i, j])) * inv


def stencil(f, h, axis, deriv, order, out):
    """Centered derivative of the stack ``f[k, i, j]`` into ``out``.

    ``axis`` is 1 or 2, or 0 for the Laplacian (``deriv`` then ignored);
    ``deriv`` is 1 or 2. Nodes closer than ``order // 2`` to any edge get 0.
    """
    if axis == 0:
        c = weights(2, order, h)
        _rows(f, c, False, False, out)
        _rows(f, c, True, True, out)
    else:
        _rows(f, weights(deriv, order, h), axis == 2, False, out)


@njit(parallel=True, cache=True)
def extrapolate(old, prev, lo, hi, cols, out):
    """``out = 2 old - prev`` on the window."""
    for i in prange(lo, hi):
        for j in range(cols[i, 0], cols[i, 1]):
            out[i, j] = 2.0 * old[i, j] - prev[i, j]


@njit(cache=True)
def weighted_sums(lm, l0, lp, dt, h, order, x1, x2, ep, dq):
    """Quadratures of the ghost-weighted terms of the three levels ``lm, l0, lp``.

    Returns ``(int e^p |du|^2, int e^p q' |T u|^2, int |du|^2, int e^p box_h u u_t)``
    with centered time differences, ``order`` spatial stencils (zero on the
    frame) and ``T_i = w_i d_t + d_i``, ``w = x/|x|`` (zero at the origin).
    """
    n, m = l0.shape
    w = order // 2
    c1 = weights(1, order, h)
    c2 = weights(2, order, h)
    inv2 = 1.0 / (2.0 * dt)
    invsq = 1.0 / (dt * dt)
    half = 0.5 * h
    weighted = 0.0
    flux = 0.0
    plain = 0.0
    source = 0.0
    for i in range(n):
        inner_i = w <= i < n - w
        for j in range(m):
            ut = (lp[i, j] - lm[i, j]) * inv2
            u1 = 0.0
            u2 = 0.0
            lap = 0.0
            if inner_i and w <= j < m - w:
                for s in range(2 * w + 1):
                    u1 += c1[s] * l0[i + s - w, j]
                    u2 += c1[s] * l0[i, j + s - w]
                    lap += c2[s] * (l0[i + s - w, j] + l0[i, j + s - w])
            r = math.hypot(x1[i], x2[j])
            w1 = x1[i] / r if r >= half else 0.0
            w2 = x2[j] / r if r >= half else 0.0
            t1 = w1 * ut + u1
            t2 = w2 * ut + u2
            sq = ut * ut + u1 * u1 + u2 * u2
            box = (lp[i, j] - 2.0 * l0[i, j] + lm[i, j]) * invsq - lap
            e = ep[i, j]
            weighted += e * sq
            flux += e * dq[i, j] * (t1 * t1 + t2 * t2)
            plain += sq
            source += box * ut * e
    hh = h * h
    return weighted * hh, flux * hh, plain * hh, source * hh
