"""Energies, ghost-weighted fluxes, decay monitors and identity residuals.

Every function here is a read-only consumer of a :class:`TimeHistory` whose
central level is the sample time. Integrals are plain node sums times ``h^2``;
the fields vanish on the outer frame, so this is the trapezoidal rule.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from . import algebra, kernels
from .errors import InsufficientHistory, NotNull, SupportViolation
from .grid import (TimeHistory, d1, d2, d11, d12, d22, default_table, forward_diff,
                   gamma_history, gamma_tree, laplacian)

INTERIOR_FRACTION = 0.5
WEIGHTED_FRACTION = 1.0 / 10
NEAR_INTERIOR_FRACTION = 2.0 / 3
SIDERIS_FLOOR = 1e-8

# predicted log-log slopes of the decay monitors
RATES = {
    "sup_du": -0.5,
    "weighted_d2": -0.5,
    "interior_d2": -1.5,
    "T_du_sup": -1.5,
    "d3_weighted": -0.5,
}

CSV_FIELDS = ("weighted_energy", "flux_inc", "flux_cum", "sup_du", "interior_d2",
              "weighted_d2", "T_du_sup", "identity_residual", "sideris_ratio")

ZERO_ALPHA = (0, 0, 0, 0, 0)


def _integral(f, h):
    return float(np.sum(f)) * h * h


def _japanese(x):
    return np.sqrt(1.0 + x * x)


def support_crop(hist, pad=4):
    """Crop ``hist`` to the bounding box of its nonzero values plus ``pad`` nodes."""
    mask = np.zeros(hist.grid.shape, dtype=bool)
    for f in hist.levels:
        mask |= f != 0
    if not mask.any():
        c = hist.grid.n // 2
        lo, hi = max(0, c - pad), min(hist.grid.n, c + pad + 1)
        return hist.crop(lo, hi)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    lo = max(0, min(rows[0], cols[0]) - pad)
    hi = min(hist.grid.n, max(rows[-1], cols[-1]) + pad + 1)
    return hist.crop(lo, hi)


# -- energies ------------------------------------------------------------------------

def staggered_energy(v):
    """Leapfrog energy of the three central levels of ``v``.

    ``e(a, b) = |(b - a)/dt|^2 - a . lap_h b`` is conserved exactly by the
    scheme for the linear equation (``lap_h`` is the scheme's own Laplacian);
    the result averages the two pairs straddling the current time.
    """
    v = v.trim(3)
    L = v.levels
    return 0.5 * sum(kernels.staggered_pair(a, b, v.dt, v.grid.h, v.order)
                     for a, b in ((L[0], L[1]), (L[1], L[2])))


def energies(hist, m):
    """``[E_0, ..., E_m]`` with ``E_k = sum_{|alpha| <= k} ||d Gamma^alpha u||^2``."""
    by_order = np.zeros(m + 1)
    for alpha, v in gamma_tree(hist, m, keep=3):
        by_order[sum(alpha)] += staggered_energy(v)
    return list(np.cumsum(by_order))


def energy(hist, m):
    return energies(hist, m)[-1]


def gradient(v):
    """Centered ``(d_t v, d_1 v, d_2 v)`` at the current time of ``v``."""
    v = v.trim(3)
    h = v.grid.h
    c = v.current
    return (v.levels[2] - v.levels[0]) / (2 * v.dt), d1(c, h, v.order), d2(c, h, v.order)


def good_components(dv, grid):
    w1, w2 = grid.omega
    return w1 * dv[0] + dv[1], w2 * dv[0] + dv[2]


def box_h(v):
    """Discrete d'Alembertian ``D_tt v - lap_h v`` at the current time."""
    v = v.trim(3)
    dtt = (v.levels[2] - 2 * v.levels[1] + v.levels[0]) / (v.dt * v.dt)
    return dtt - laplacian(v.current, v.grid.h, v.order)


_WEIGHT_CACHE = {}


def _weights(grid, t):
    """``(e^p, q'(r - t))`` on ``grid``; the last pair is kept for reuse at the same time."""
    key = (grid.n, grid.h, float(grid.x1[0]), float(t))
    if key not in _WEIGHT_CACHE:
        _WEIGHT_CACHE.clear()
        table = default_table()
        s = grid.r - t
        _WEIGHT_CACHE[key] = (np.exp(table.q(s)), table.dq(s))
    return _WEIGHT_CACHE[key]


@dataclass
class WeightedTerms:
    weighted: float
    flux: float
    unweighted: float
    source: float


def weighted_terms(v, t=None):
    """Weighted energy, flux density, plain energy and ``int box_h v d_t v e^p`` for ``v``."""
    v = v.trim(3)
    grid = v.grid
    t = v.t if t is None else t
    ep, dq = _weights(grid, t)
    L = v.levels
    return WeightedTerms(*kernels.weighted_sums(L[0], L[1], L[2], v.dt, grid.h, v.order,
                                                grid.x1, grid.x2, ep, dq))


def weighted_energy_and_flux(hist, alpha=ZERO_ALPHA):
    """``(||e^{p/2} d v||^2, int e^p q'(r - t) |T v|^2)`` for ``v = Gamma^alpha u``."""
    terms = weighted_terms(gamma_history(hist, alpha, keep=3))
    return terms.weighted, terms.flux


def energy_identity_residual(hist, alpha=ZERO_ALPHA, scale=None):
    """Residual of ``1/2 dW/dt + 1/2 F = int (box v) d_t v e^p``, relative to the energy of ``v``.

    ``dW/dt`` is the centered difference of the weighted energy over the two
    levels adjacent to the current one, so five levels of ``v`` are needed.
    """
    v = gamma_history(hist, alpha, keep=5)
    lower = TimeHistory(v.levels[0:3], v.times[0:3], v.grid, v.dt, v.order)
    upper = TimeHistory(v.levels[2:5], v.times[2:5], v.grid, v.dt, v.order)
    dW = (weighted_terms(upper).weighted - weighted_terms(lower).weighted) / (2 * v.dt)
    mid = weighted_terms(v)
    if scale is None:
        scale = staggered_energy(v)
    if scale <= 0:
        return 0.0
    return abs(0.5 * dW + 0.5 * mid.flux - mid.source) / scale


def sandwich_holds(weighted, unweighted, tol=1e-10):
    """``e^{-q(inf)} E <= W <= e^{q(inf)} E`` up to a relative tolerance."""
    qinf = default_table().q_inf
    lo = math.exp(-qinf) * unweighted
    hi = math.exp(qinf) * unweighted
    slack = tol * max(unweighted, 1e-300)
    return lo - slack <= weighted <= hi + slack


# -- decay monitors --------------------------------------------------------------------

def hessian_entries(v, spatial=False):
    """Yield ``((i, j), entry)`` of the centered space-time Hessian one at a time."""
    v = v.trim(3)
    h, dt, o = v.grid.h, v.dt, v.order
    c = v.current
    if not spatial:
        yield (0, 0), (v.levels[2] - 2 * c + v.levels[0]) / (dt * dt)
        ut = (v.levels[2] - v.levels[0]) / (2 * dt)
        yield (0, 1), d1(ut, h, o)
        yield (0, 2), d2(ut, h, o)
        del ut
    yield (1, 1), d11(c, h, o)
    yield (1, 2), d12(c, h, o)
    yield (2, 2), d22(c, h, o)


def hessian(v):
    """Centered space-time Hessian entries at the current time, keyed by index pair."""
    return dict(hessian_entries(v))


def hessian_norm(H, spatial=False):
    """Frobenius norm from a dict or from an iterable of ``((i, j), entry)`` pairs.

    Entries coming from an iterable are consumed and overwritten.
    """
    owned = not isinstance(H, dict)
    items = H if owned else H.items()
    total = None
    for (i, j), f in items:
        if spatial and (i == 0 or j == 0):
            continue
        sq = np.multiply(f, f, out=f if owned else None)
        if i != j:
            sq *= 2.0
        if total is None:
            total = sq
        else:
            total += sq
    return np.sqrt(total, out=total)


def _sup(f, mask=None):
    f = np.abs(f)
    if mask is not None:
        f = f[mask]
    return float(f.max()) if f.size else 0.0


def decay_monitors(hist, m=None, interior=INTERIOR_FRACTION):
    """Sup-norm monitors paired with their predicted rates (see :data:`RATES`)."""
    m = (hist.depth - 3) // hist.order if m is None else m
    if m < 2:
        raise InsufficientHistory("decay monitors need m_diag >= 2")
    grid = hist.grid
    t = hist.t
    u3 = hist.trim(3 + 2 * hist.reach)
    r = grid.r
    inner = r < interior * t
    weight = _japanese(r - t)

    sup_du = 0.0
    for alpha, v in gamma_tree(hist, m - 2, keep=3):
        dv = gradient(v)
        sup_du = max(sup_du, _sup(np.sqrt(dv[0] ** 2 + dv[1] ** 2 + dv[2] ** 2)))
        del dv

    interior_d2 = 0.0
    for alpha, v in gamma_tree(hist, max(m - 3, 0), keep=3):
        norm = hessian_norm(hessian_entries(v, spatial=True))
        interior_d2 = max(interior_d2, _sup(norm, inner))
        del norm

    norm = hessian_norm(hessian_entries(u3))
    norm *= weight
    weighted_d2 = _sup(norm)
    del norm

    # good derivatives and weighted Hessians of the three first derivatives,
    # built one at a time; the Hessians stand in for third derivatives
    o = hist.order
    weight *= weight
    outer = ~inner
    del inner
    tdu = 0.0
    d3 = 0.0
    for k in range(3):
        if k == 0:
            w = u3.time_derivative()
        else:
            op = d1 if k == 1 else d2
            w = u3.trim(3).map(lambda f: op(f, grid.h, o))
        T1, T2 = good_components(gradient(w), grid)
        T1 *= T1
        T2 *= T2
        T1 += T2
        del T2
        tdu = max(tdu, math.sqrt(_sup(T1)))
        del T1
        norm = hessian_norm(hessian_entries(w))
        norm *= weight
        d3 = max(d3, _sup(norm, outer))
        del norm, w

    return {
        "sup_du": sup_du,
        "interior_d2": interior_d2,
        "weighted_d2": weighted_d2,
        "T_du_sup": tdu,
        "d3_weighted": d3,
    }


def fit_slope(times, values, window=(10.0, math.inf)):
    """Least-squares slope of ``log(value)`` against ``log(t)`` over ``window``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = (t >= window[0]) & (t <= window[1]) & (y > 0)
    if keep.sum() < 2:
        raise ValueError("need at least two positive samples in the fit window")
    slope, _ = np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)
    return float(slope)


def sideris_bound_check(hist, floor=SIDERIS_FLOOR):
    """``sup <r-t>(|u_tt| + |grad u_t| + |lap u|) / (|d Gamma^{<=1} u| + (r+t)|box u|)``.

    Nodes whose right-hand side is below ``floor`` times its maximum carry no
    resolved signal and are skipped.
    """
    if hist.depth < 3 + 2 * hist.reach:
        raise InsufficientHistory(f"the pointwise bound needs {3 + 2 * hist.reach} levels")
    grid = hist.grid
    t = hist.t
    r = grid.r
    lhs = None
    spatial_lap = None
    time_grad = None
    for (i, j), f in hessian_entries(hist):
        if (i, j) == (0, 0):
            lhs = np.abs(f, out=f)
        elif i == 0:
            f *= f
            if time_grad is None:
                time_grad = f
            else:
                time_grad += f
                lhs += np.sqrt(time_grad, out=time_grad)
                time_grad = None
        elif i == j:
            if spatial_lap is None:
                spatial_lap = f
            else:
                spatial_lap += f
                lhs += np.abs(spatial_lap, out=spatial_lap)
                spatial_lap = None
        del f
    lhs *= _japanese(r - t)
    first = None
    for alpha, v in gamma_tree(hist, 1, keep=3):
        for f in gradient(v):
            f *= f
            if first is None:
                first = f
            else:
                first += f
    rhs = np.sqrt(first, out=first)
    box = box_h(hist)
    np.abs(box, out=box)
    box *= r + t
    rhs += box
    del box
    top = float(rhs.max())
    if top <= 0:
        return 0.0
    mask = rhs > floor * top
    mask[:2, :] = mask[-2:, :] = False
    mask[:, :2] = mask[:, -2:] = False
    if not mask.any():
        return 0.0
    return float(np.max(lhs[mask] / (rhs[mask] + 1e-30)))


# -- cone-localized quantities ---------------------------------------------------------------

def _smooth_step(x):
    """``0`` for ``x <= 0``, ``1`` for ``x >= 1``, C-infinity in between."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    y = 1.0 - x
    b = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
    return a / (a + b)


def cutoff(z):
    """Cutoff equal to 1 on ``[2/3, 3/2]`` and vanishing outside ``(1/3, 2)``."""
    z = np.asarray(z, dtype=float)
    return _smooth_step(3.0 * (z - 1.0 / 3)) * (1.0 - _smooth_step(2.0 * (z - 1.5)))


def _trig_max(p, points=4096):
    if p.is_zero():
        return 0.0
    theta = np.linspace(0.0, 2 * np.pi, points, endpoint=False)
    return float(np.max(np.abs(p.evaluate(theta))))


def localized_cone_flux(hist, g):
    """``(int h(theta) d_+u d_t u d_tt u e^p phi(r/t), max|h|, max|tangency symbol|)``."""
    h_poly = algebra.h_symbol(g)
    tang = algebra.tangency_symbol(g)
    h_max = _trig_max(h_poly)
    tang_max = _trig_max(tang)
    if h_poly.is_zero():
        return 0.0, h_max, tang_max
    v = hist.trim(3)
    grid = v.grid
    t = v.t
    w1, w2 = grid.omega
    ut, u1, u2 = gradient(v)
    u1 *= w1
    u2 *= w2
    u1 += u2
    del u2
    u1 += ut
    u1 *= ut
    del ut
    # u1 now holds d_+u d_t u
    u1 *= (v.levels[2] - 2 * v.current + v.levels[0]) / (v.dt * v.dt)
    u1 *= _weights(grid, t)[0]
    u1 *= cutoff(grid.r / t)
    u1 *= h_poly.evaluate(np.arctan2(grid.X2, grid.X1))
    return _integral(u1, grid.h), h_max, tang_max


# -- identity and inequality checks ------------------------------------------------------------

def null_identity_residual(g, f, hfun, grid, t, dt=None, r_min=1.0):
    """Max discrepancy between the two sides of the null-form identity for ``T``.

    ``f`` and ``hfun`` are callables ``(t, X1, X2)``. Both sides use the same
    centered stencils; the only difference is compact versus composed second
    differences, so quadratics give zero up to rounding.
    """
    if not algebra.check_null(g):
        raise NotNull("tensor fails the null condition", algebra.full_symbol(g).nonzero())
    dt = grid.h if dt is None else dt
    ga = g.array
    times = t + dt * np.arange(-2, 3)
    F = TimeHistory([grid.sample(lambda X1, X2: f(s, X1, X2)) for s in times], times, grid, dt)
    Hh = TimeHistory([grid.sample(lambda X1, X2: hfun(s, X1, X2)) for s in times], times, grid, dt)
    h = grid.h
    w = (-np.ones(grid.shape),) + grid.omega

    df = gradient(F)
    dtf = df[0]
    Tf = [w[k] * dtf + df[k] for k in range(3)]

    Hc = Hh.trim(3)
    hess = hessian(Hc)
    # first derivatives of h and of its time derivative, as histories
    ht = Hh.time_derivative()
    dh = [ht, Hh.map(lambda x: d1(x, h)), Hh.map(lambda x: d2(x, h))]

    def T_of(i, hist3):
        dv = gradient(hist3)
        return w[i] * dv[0] + dv[i]

    lhs = np.zeros(grid.shape)
    rhs = np.zeros(grid.shape)
    for k in range(3):
        for i in range(3):
            for j in range(3):
                c = ga[k, i, j]
                if c == 0:
                    continue
                H_ij = hess[(min(i, j), max(i, j))]
                lhs += c * df[k] * H_ij
                rhs += c * (Tf[k] * H_ij
                            - w[k] * dtf * T_of(i, dh[j])
                            + w[k] * w[i] * dtf * T_of(j, dh[0]))
    mask = grid.r >= r_min
    mask[:3, :] = mask[-3:, :] = False
    mask[:, :3] = mask[:, -3:] = False
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(lhs - rhs)[mask]))


def hardy_check(f, M, df=None, tol=1e-8):
    """Both sides of ``int_0^{M+1} f^2 rho/(2+M-rho)^2 <= 4 int_0^{M+1} f'^2 rho``.

    Returns ``(lhs, rhs)`` where ``rhs`` is the integral without the factor 4.
    """
    b = M + 1.0
    if abs(f(b)) > tol:
        raise SupportViolation(f"profile does not vanish at rho = M + 1 (f = {f(b):.3g})")
    if df is None:
        step = 1e-5

        def df(x):
            return (f(x + step) - f(x - step)) / (2 * step)

    opts = dict(epsabs=1e-13, epsrel=1e-11, limit=400)
    lhs = integrate.quad(lambda x: f(x) ** 2 * x / (2.0 + M - x) ** 2, 0.0, b, **opts)[0]
    rhs = integrate.quad(lambda x: df(x) ** 2 * x, 0.0, b, **opts)[0]
    return lhs, rhs


def random_hardy_profile(rng, M, terms=4):
    """Random smooth profile vanishing to infinite order at ``M + 1``, with its derivative."""
    b = M + 1.0
    a = rng.normal(size=terms)
    c = rng.normal(size=terms)
    freq = rng.uniform(0.2, 3.0, size=terms)

    def envelope(x):
        s = (x / b) ** 2
        if s >= 1.0:
            return 0.0, 0.0
        e = math.exp(-1.0 / (1.0 - s))
        return e, e * (-2.0 * x / (b * b)) / (1.0 - s) ** 2

    def poly(x):
        return float(np.sum(a * np.cos(freq * x) + c * np.sin(freq * x)))

    def dpoly(x):
        return float(np.sum(freq * (-a * np.sin(freq * x) + c * np.cos(freq * x))))

    def f(x):
        return poly(x) * envelope(x)[0]

    def df(x):
        e, de = envelope(x)
        return dpoly(x) * e + poly(x) * de

    return f, df


# -- per-sample reports -------------------------------------------------------------------------

@dataclass
class EnergyReport:
    t: float
    energies: list
    weighted_energy: float
    flux: float
    flux_inc: float
    flux_cum: float
    sup_du: float
    interior_d2: float
    weighted_d2: float
    T_du_sup: float
    d3_weighted: float
    identity_residual: float
    sideris_ratio: float
    h_theta_flux: float
    unweighted_energy: float
    sandwich_ok: bool

    def csv_row(self):
        return [self.t, *self.energies] + [getattr(self, k) for k in CSV_FIELDS]


def csv_header(m):
    return ["t"] + [f"E{k}" for k in range(m + 1)] + list(CSV_FIELDS)


class DiagnosticsSink:
    """Callback for :func:`nullwave.solver.run` that builds one report per sample."""

    def __init__(self, tensor=None, m=2, crop=True, cone_flux=True):
        self.tensor = tensor
        self.m = m
        self.crop = crop
        self.cone_flux = cone_flux
        self.reports = []
        self._last = None

    def __call__(self, hist, state=None):
        if self.crop:
            hist = support_crop(hist)
        self.reports.append(self.report(hist))

    def report(self, hist):
        m = self.m
        E = energies(hist, m)
        # the residual evaluates the weights at t +- dt and t last, so the
        # plain terms and the cone flux below reuse them
        resid = energy_identity_residual(hist, scale=E[0]) if hist.depth >= 5 else 0.0
        terms = weighted_terms(hist)
        if self._last is None:
            inc = 0.0
        else:
            t0, F0 = self._last
            inc = 0.5 * (terms.flux + F0) * (hist.t - t0)
        self._last = (hist.t, terms.flux)
        cum = (self.reports[-1].flux_cum if self.reports else 0.0) + inc
        mon = decay_monitors(hist, m) if m >= 2 else dict.fromkeys(RATES, 0.0)
        sid = sideris_bound_check(hist) if hist.depth >= 3 + 2 * hist.reach else 0.0
        cone = 0.0
        if self.cone_flux and self.tensor is not None:
            cone = localized_cone_flux(hist, self.tensor)[0]
        return EnergyReport(
            t=hist.t, energies=E, weighted_energy=terms.weighted, flux=terms.flux,
            flux_inc=inc, flux_cum=cum, identity_residual=resid, sideris_ratio=sid,
            h_theta_flux=cone, unweighted_energy=terms.unweighted,
            sandwich_ok=sandwich_holds(terms.weighted, terms.unweighted), **mon)

    def column(self, name):
        if name.startswith("E") and name[1:].isdigit():
            return np.array([r.energies[int(name[1:])] for r in self.reports])
        return np.array([getattr(r, name) for r in self.reports])

    def write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(self.m))
        for r in self.reports:
            writer.writerow([format(x, ".17g") for x in r.csv_row()])


def drift_ratio(values):
    """``max_t E(t)/E(2)``; defined as 1 for a zero series."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values[0] == 0:
        return 1.0
    return float(np.max(values / values[0]))
