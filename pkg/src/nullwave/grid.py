"""Uniform Cartesian grids, centered difference stencils and vector fields.

Arrays are indexed ``f[i, j] = f(x1[i], x2[j])``; stencil functions act on
the last two axes so they apply equally to single snapshots and to stacks of
time levels. Every stencil writes zeros on the outer ring of nodes it cannot reach
(one node wide for second-order stencils, two for fourth-order ones), which
the solver keeps identically zero (compact support).
"""

import math
import os
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from . import kernels
from .errors import ConfigInvalid, InsufficientHistory

# Gamma factors in the canonical order (dt, d1, d2, rotation, scaling)
GAMMA_NAMES = ("dt", "d1", "d2", "rot", "L0")
_TIME_FACTORS = (True, False, False, False, True)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tensor-product grid with spacing ``h``; square grids are centred on the origin."""

    h: float
    x1: np.ndarray
    x2: np.ndarray

    @classmethod
    def square(cls, L, h):
        cells = 2 * L / h
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ConfigInvalid(f"2L/h must be an integer (L={L}, h={h})")
        n = int(round(cells)) + 1
        if n % 2 == 0:
            raise ConfigInvalid("grid must have an odd number of nodes per axis")
        half = n // 2
        x = h * np.arange(-half, half + 1, dtype=float)
        return cls(float(h), x, x.copy())

    @property
    def n(self):
        return len(self.x1)

    @property
    def shape(self):
        return (len(self.x1), len(self.x2))

    @property
    def L(self):
        return float(max(abs(self.x1[0]), abs(self.x1[-1]), abs(self.x2[0]), abs(self.x2[-1])))

    def crop(self, lo, hi):
        """Sub-grid of nodes ``lo <= index < hi`` on both axes."""
        return Grid2D(self.h, self.x1[lo:hi], self.x2[lo:hi])

    @cached_property
    def X1(self):
        return np.broadcast_to(self.x1[:, None], self.shape)

    @cached_property
    def X2(self):
        return np.broadcast_to(self.x2[None, :], self.shape)

    @cached_property
    def r(self):
        return np.hypot(self.X1, self.X2)

    @cached_property
    def omega(self):
        """``(x1/r, x2/r)``, set to zero at nodes closer than ``h/2`` to the origin."""
        r = self.r
        safe = np.where(r >= 0.5 * self.h, r, 1.0)
        w1 = np.where(r >= 0.5 * self.h, self.X1 / safe, 0.0)
        w2 = np.where(r >= 0.5 * self.h, self.X2 / safe, 0.0)
        return w1, w2

    def sample(self, fn, *args):
        return np.asarray(fn(self.X1, self.X2, *args), dtype=float)


# -- stencils ------------------------------------------------------------------

def _apply(f, h, axis, deriv, order):
    if order not in (2, 4):
        raise ValueError(f"unsupported stencil order {order}")
    f = np.asarray(f, dtype=float)
    stack = np.ascontiguousarray(f.reshape((-1,) + f.shape[-2:]))
    out = np.empty_like(stack)
    kernels.stencil(stack, float(h), axis, deriv, order, out)
    return out.reshape(f.shape)


def d1(f, h, order=2):
    """Centered first derivative along axis 1 (``order`` 2 or 4)."""
    return _apply(f, h, 1, 1, order)


def d2(f, h, order=2):
    """Centered first derivative along axis 2 (``order`` 2 or 4)."""
    return _apply(f, h, 2, 1, order)


def d11(f, h, order=2):
    """Centered second derivative along axis 1."""
    return _apply(f, h, 1, 2, order)


def d22(f, h, order=2):
    return _apply(f, h, 2, 2, order)


def d12(f, h, order=2):
    return d1(d2(f, h, order), h, order)


def laplacian(f, h, order=2):
    """Five-point (``order=2``) or nine-point cross (``order=4``) Laplacian."""
    return _apply(f, h, 0, 2, order)


def spatial_derivative(f, h, axis, order=1, mixed=None, accuracy=2):
    """Centered derivative of ``f`` along ``axis`` (1 or 2).

    ``order=2`` gives the second derivative; ``mixed`` names a second axis
    for ``d_12``. ``accuracy`` (2 or 4) picks the stencil width.
    """
    if mixed is not None:
        if {axis, mixed} != {1, 2}:
            raise ValueError("mixed derivative needs axes 1 and 2")
        return d12(f, h, accuracy)
    table = {(1, 1): d1, (2, 1): d2, (1, 2): d11, (2, 2): d22}
    try:
        return table[(axis, order)](f, h, accuracy)
    except KeyError:
        raise ValueError(f"unsupported derivative axis={axis} order={order}") from None


def forward_diff(f, h, axis):
    """Forward difference ``(f[i+1] - f[i])/h`` along spatial ``axis``; the last slice is 0."""
    ax = f.ndim - 3 + axis
    out = np.zeros_like(f)
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    hi[ax] = slice(1, None)
    lo[ax] = slice(None, -1)
    out[tuple(lo)] = (f[tuple(hi)] - f[tuple(lo)]) / h
    return out


# -- time histories ------------------------------------------------------------

class TimeHistory:
    """Consecutive snapshots ``levels[0..D-1]`` at uniformly spaced ``times``.

    The *current* snapshot is the central one. Temporal derivatives are
    centered differences across levels, so every time-involving vector field
    consumes ``order // 2`` levels at each end. ``order`` (2 or 4) also sets
    the spatial stencils used by the vector fields.
    """

    def __init__(self, levels, times, grid, dt=None, order=2):
        self.levels = list(levels)
        self.times = np.asarray(times, dtype=float)
        self.grid = grid
        if order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")
        self.order = order
        if len(self.levels) != len(self.times) or not self.levels:
            raise ValueError("one time stamp per level required")
        if dt is None:
            if len(self.times) < 2:
                raise ValueError("dt required for a single-level history")
            dt = float(self.times[1] - self.times[0])
        self.dt = float(dt)
        if len(self.times) > 1:
            steps = np.diff(self.times)
            if np.max(np.abs(steps - self.dt)) > 1e-9 * max(1.0, abs(self.dt)):
                raise ValueError("time stamps must be uniformly spaced")

    @property
    def reach(self):
        """Levels consumed at each end by one centered time derivative."""
        return self.order // 2

    @property
    def depth(self):
        return len(self.levels)

    @property
    def center(self):
        return self.depth // 2

    @property
    def current(self):
        return self.levels[self.center]

    @property
    def t(self):
        return float(self.times[self.center])

    def _new(self, levels, times, grid=None):
        return TimeHistory(levels, times, self.grid if grid is None else grid, self.dt, self.order)

    def with_order(self, order):
        return TimeHistory(self.levels, self.times, self.grid, self.dt, order)

    def trim(self, depth):
        """Central ``depth`` levels (``depth`` odd)."""
        if depth > self.depth:
            raise InsufficientHistory(f"need {depth} levels, have {self.depth}")
        cut = (self.depth - depth) // 2
        if cut == 0:
            return self
        return self._new(self.levels[cut:cut + depth], self.times[cut:cut + depth])

    def crop(self, lo, hi):
        return self._new([f[lo:hi, lo:hi] for f in self.levels], self.times,
                         self.grid.crop(lo, hi))

    def map(self, fn):
        return self._new([fn(f) for f in self.levels], self.times)

    def time_derivative(self):
        r = self.reach
        if self.depth < 2 * r + 1:
            raise InsufficientHistory(f"centered time derivative needs {2 * r + 1} levels")
        L = self.levels
        levels = []
        for n in range(r, self.depth - r):
            out = np.empty(L[n].shape)
            far = L[n - 2:n + 3:4] if r == 2 else (L[n], L[n])
            kernels.time_diff(far[0], L[n - 1], L[n + 1], far[1], self.dt, self.order, out)
            levels.append(out)
        return self._new(levels, self.times[r:self.depth - r])

    def second_time_derivative(self):
        if self.depth < 3:
            raise InsufficientHistory("second time derivative needs 3 levels")
        inv = 1.0 / (self.dt * self.dt)
        levels = [(self.levels[n + 1] - 2 * self.levels[n] + self.levels[n - 1]) * inv
                  for n in range(1, self.depth - 1)]
        return self._new(levels, self.times[1:-1])

    def apply_factor(self, name):
        """One vector field from :data:`GAMMA_NAMES` applied to every usable level."""
        h, g, o = self.grid.h, self.grid, self.order
        if name == "dt":
            return self.time_derivative()
        if name == "d1":
            return self.map(lambda f: d1(f, h, o))
        if name == "d2":
            return self.map(lambda f: d2(f, h, o))
        if name == "rot":
            return self.map(lambda f: g.X1 * d2(f, h, o) - g.X2 * d1(f, h, o))
        if name == "L0":
            r = self.reach
            if self.depth < 2 * r + 1:
                raise InsufficientHistory(f"centered time derivative needs {2 * r + 1} levels")
            L = self.levels
            levels = []
            for n in range(r, self.depth - r):
                out = np.empty(L[n].shape)
                far = L[n - 2:n + 3:4] if r == 2 else (L[n], L[n])
                kernels.time_diff(far[0], L[n - 1], L[n + 1], far[1], self.dt, self.order, out)
                out *= self.times[n]
                part = d1(L[n], h, o)
                part *= g.X1
                out += part
                part = d2(L[n], h, o)
                part *= g.X2
                out += part
                levels.append(out)
            return self._new(levels, self.times[r:self.depth - r])
        raise ValueError(f"unknown vector field {name!r}")


def _check_alpha(alpha):
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 5 or min(alpha) < 0:
        raise ValueError("multi-index must have 5 non-negative entries")
    return alpha


def time_order(alpha):
    """Number of time-involving factors (dt and L0) in ``Gamma^alpha``."""
    alpha = _check_alpha(alpha)
    return alpha[0] + alpha[4]


def gamma_history(hist, alpha, keep=1):
    """``Gamma^alpha`` applied factor by factor, right to left, keeping ``keep`` levels."""
    alpha = _check_alpha(alpha)
    need = 2 * hist.reach * time_order(alpha) + keep
    if hist.depth < need:
        raise InsufficientHistory(
            f"Gamma^{alpha} needs {need} levels, history holds {hist.depth}")
    out = hist.trim(need)
    remaining = time_order(alpha)
    for idx in range(4, -1, -1):
        for _ in range(alpha[idx]):
            if _TIME_FACTORS[idx]:
                remaining -= 1
            else:
                out = out.trim(keep + 2 * hist.reach * remaining)
            out = out.apply_factor(GAMMA_NAMES[idx])
    return out.trim(keep)


def apply_gamma(hist, alpha):
    """``Gamma^alpha u`` at the current time of ``hist``."""
    return gamma_history(hist, alpha, keep=1).current


def multi_indices(m):
    """All multi-indices with ``|alpha| <= m``, graded by order."""
    out = []
    for order in range(m + 1):
        for alpha in product(range(order + 1), repeat=5):
            if sum(alpha) == order:
                out.append(alpha)
    return out


def gamma_tree(hist, m, keep=3):
    """Yield ``(alpha, Gamma^alpha history)`` for every ``|alpha| <= m``.

    Each factor is applied once to the memoised parent (the multi-index with
    its leftmost factor removed), walking depth first so that only one branch
    of intermediate results is alive at a time. Yielded histories hold
    ``keep`` levels around the current time.
    """
    step = 2 * hist.reach
    need = keep + step * m
    if hist.depth < need:
        raise InsufficientHistory(f"order {m} diagnostics need {need} levels, have {hist.depth}")

    def walk(node, alpha, order, smallest):
        depth_needed = keep + step * (m - order)
        node = node.trim(depth_needed)
        yield alpha, node.trim(keep)
        if order == m:
            return
        for idx in range(smallest, -1, -1):
            child_alpha = list(alpha)
            child_alpha[idx] += 1
            parent = node if _TIME_FACTORS[idx] else node.trim(depth_needed - step)
            child = parent.apply_factor(GAMMA_NAMES[idx])
            yield from walk(child, tuple(child_alpha), order + 1, idx)
            # drop the finished branch before building its sibling
            del child

    yield from walk(hist.trim(need), (0, 0, 0, 0, 0), 0, 4)


def good_derivative(hist, i):
    """``T_i f = omega_i d_t f + d_i f`` at the current time."""
    if i not in (1, 2):
        raise ValueError("good derivatives are T_1 and T_2")
    near = hist.trim(2 * hist.reach + 1)
    ft = near.time_derivative().current
    f = near.current
    w = hist.grid.omega[i - 1]
    h, o = hist.grid.h, hist.order
    return w * ft + (d1(f, h, o) if i == 1 else d2(f, h, o))


def radial_derivative(f, grid):
    w1, w2 = grid.omega
    return w1 * d1(f, grid.h) + w2 * d2(f, grid.h)


def angular_derivative(f, grid):
    return grid.X1 * d2(f, grid.h) - grid.X2 * d1(f, grid.h)


# -- ghost weight ----------------------------------------------------------------

def ghost_weight_derivative(s):
    """``q'(s) = <s>^{-1} (log(2 + s^2))^{-2}``."""
    s = np.asarray(s, dtype=float)
    return 1.0 / (np.sqrt(1.0 + s * s) * np.log(2.0 + s * s) ** 2)


def _integrand(tau):
    return 1.0 / (math.sqrt(1.0 + tau * tau) * math.log(2.0 + tau * tau) ** 2)


def _log_integrand(u):
    # integrand in tau = e^u, written to avoid overflow for large u
    e = math.exp(-2.0 * u)
    return 1.0 / (math.sqrt(1.0 + e) * (2.0 * u + math.log1p(2.0 * e)) ** 2)


def _tail(a, b=np.inf):
    b = np.inf if b == np.inf else math.log(b)
    return integrate.quad(_log_integrand, math.log(a), b, epsabs=0, epsrel=1e-12, limit=200)[0]


class GhostWeightTable:
    """Cached ``q(s) = int_0^s q'(tau) dtau`` on ``[-S, S]``.

    Node values come from adaptive quadrature cell by cell; between nodes the
    table uses cubic Hermite interpolation with the closed-form derivative.
    Outside ``[-S, S]`` the tail integral is evaluated on demand.
    """

    def __init__(self, S=200.0, ds=1.0 / 256, cache_path=None):
        self.S = float(S)
        self.ds = float(ds)
        cells = int(round(self.S / self.ds))
        s = self.ds * np.arange(cells + 1)
        values = None
        if cache_path and os.path.exists(cache_path):
            with np.load(cache_path) as data:
                if data["S"] == self.S and data["ds"] == self.ds:
                    values = data["q"]
                    self.q_inf = float(data["q_inf"])
        if values is None:
            pieces = [integrate.quad(_integrand, a, b, epsabs=0, epsrel=1e-13)[0]
                      for a, b in zip(s[:-1], s[1:])]
            values = np.concatenate([[0.0], np.cumsum(pieces)])
            tail = _tail(self.S)
            self.q_inf = float(values[-1] + tail)
            if cache_path:
                np.savez(cache_path, S=self.S, ds=self.ds, q=values, q_inf=self.q_inf)
        self.s = s
        self.values = values
        self._spline = CubicHermiteSpline(s, values, ghost_weight_derivative(s))

    def q(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        out = np.empty_like(a)
        inside = a <= self.S
        out[inside] = self._spline(a[inside])
        if np.any(~inside):
            tail = {v: _tail(self.S, v)
                    for v in np.unique(a[~inside])}
            out[~inside] = self.values[-1] + np.array([tail[v] for v in a[~inside]])
        return np.sign(s) * out

    def dq(self, s):
        return ghost_weight_derivative(s)


@lru_cache(maxsize=None)
def default_table():
    return GhostWeightTable(cache_path=os.environ.get("NULLWAVE_CACHE") or None)


def ghost_weight(s):
    """``q(s)`` from the default cached table."""
    return default_table().q(s)


def weight_field(grid, t):
    """``e^{p}`` with ``p = q(r - t)`` sampled on ``grid``."""
    return np.exp(default_table().q(grid.r - t))


# -- snapshot files --------------------------------------------------------------

_HEADER = struct.Struct("<qddd")


def write_snapshot(fh, values, h, L, t):
    """Write one square snapshot: 32-byte header (n, h, L, t) then row-major doubles."""
    values = np.ascontiguousarray(values, dtype="<f8")
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("snapshots are square")
    fh.write(_HEADER.pack(n, float(h), float(L), float(t)))
    fh.write(values.tobytes())


def read_snapshot(fh):
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise EOFError("truncated snapshot header")
    n, h, L, t = _HEADER.unpack(head)
    data = fh.read(8 * n * n)
    if len(data) != 8 * n * n:
        raise EOFError("truncated snapshot data")
    return np.frombuffer(data, dtype="<f8").reshape(n, n).copy(), h, L, t


def save_snapshot(path, values, grid, t):
    with open(path, "wb") as fh:
        write_snapshot(fh, values, grid.h, grid.L, t)


def load_snapshot(path):
    with open(path, "rb") as fh:
        return read_snapshot(fh)


def save_snapshot_csv(path, values, grid):
    rows = np.column_stack([grid.X1.ravel(), grid.X2.ravel(), np.asarray(values).ravel()])
    np.savetxt(path, rows, delimiter=",", header="x1,x2,u", comments="", fmt="%.17g")
