"""Leapfrog integration of ``box u = g^{kij} d_k u d_ij u`` from data at t = 2.

The acceleration is solved node by node from

    (1 - g^{k00} d_k u) u_tt = lap u + sum_{(i,j) != (0,0)} g^{kij} d_k u d_ij u (+ S),

where ``u_t`` and ``u_tj`` are closed by a fixed point on the acceleration:
``u_t^n = (u^n - u^{n-1})/dt + dt/2 a^n`` is exactly the centered velocity of
the leapfrog step that ``a^n`` produces. Work is restricted to a disk-shaped
window around the domain of influence of the data, so early steps are cheap
even on large grids.
"""

import math
import re
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numba
import numpy as np

from . import kernels
from .algebra import CoefficientTensor
from .errors import (Breakdown, ConfigInvalid, DenominatorCollapse,
                     FixedPointDivergence, GradientBlowup)
from .grid import Grid2D, TimeHistory, d1, d2, read_snapshot, write_snapshot

T0 = 2.0


# -- initial profiles ------------------------------------------------------------

def _bump_of(s, a=1.0):
    """``exp(-a/(1-s))`` for ``s < 1``, zero otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-a / (1.0 - s[inside]))
    return out


class Profile:
    """A named initial profile ``f(x1, x2)`` supported in ``|x| <= radius``."""

    def __init__(self, name, fn, radius, params=None):
        self.name = name
        self.fn = fn
        self.radius = float(radius)
        self.params = dict(params or {})

    def __call__(self, X1, X2):
        return np.asarray(self.fn(X1, X2), dtype=float)

    def __repr__(self):
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}({args})"


def bump(radius=1.0, a=1.0):
    """``exp(a - 1) exp(-a/(1 - |x|^2/R^2))``; ``a = 1`` is the standard bump.

    Larger ``a`` flattens the approach to the edge of the support (the centre
    value stays ``1/e``), which needs fewer nodes to resolve.
    """
    if radius <= 0 or a <= 0:
        raise ConfigInvalid("bump needs radius > 0 and a > 0")
    R2 = radius * radius
    scale = math.exp(a - 1.0)

    def fn(X1, X2):
        s = (X1 * X1 + X2 * X2) / R2
        return scale * _bump_of(s, a)

    return Profile("bump", fn, radius, {"radius": radius, "a": a})


def annulus(r0=0.5, width=0.4):
    if width <= 0 or r0 < 0:
        raise ConfigInvalid("annulus needs r0 >= 0 and width > 0")

    def fn(X1, X2):
        s = (np.hypot(X1, X2) - r0) / width
        return _bump_of(s * s)

    return Profile("annulus", fn, r0 + width, {"r0": r0, "width": width})


def oscillatory(k=4.0, radius=1.0):
    base = bump(radius)
    return Profile("oscillatory", lambda X1, X2: base(X1, X2) * np.cos(k * X1), radius,
                   {"k": k, "radius": radius})


def zero():
    return Profile("zero", lambda X1, X2: np.zeros(np.broadcast(X1, X2).shape), 0.0)


PROFILES = {"bump": bump, "annulus": annulus, "oscillatory": oscillatory, "zero": zero}
_PROFILE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def make_profile(spec):
    """Profile from a ``Profile``, a callable, or a string like ``"annulus(r0=0.5,width=0.3)"``.

    Bare callables are assumed to be supported in the unit disk.
    """
    if isinstance(spec, Profile):
        return spec
    if callable(spec):
        return Profile(getattr(spec, "__name__", "custom"), spec, 1.0)
    m = _PROFILE_RE.match(str(spec))
    if not m or m.group(1) not in PROFILES:
        raise ConfigInvalid(f"unknown profile {spec!r}; known: {', '.join(PROFILES)}")
    kwargs = {}
    if m.group(2) and m.group(2).strip():
        for item in m.group(2).split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigInvalid(f"profile argument {item!r} is not key=value")
            try:
                kwargs[key.strip()] = float(val)
            except ValueError:
                raise ConfigInvalid(f"profile argument {item!r} is not numeric") from None
    try:
        return PROFILES[m.group(1)](**kwargs)
    except TypeError as exc:
        raise ConfigInvalid(f"bad arguments for profile {m.group(1)}: {exc}") from None


# -- configuration ---------------------------------------------------------------

@dataclass
class SolverConfig:
    tensor: CoefficientTensor = field(default_factory=CoefficientTensor.zero)
    epsilon: float = 0.01
    f1: object = "bump(a=6)"
    f2: object = "zero"
    h: float = 1.0 / 32
    dt: Optional[float] = None
    L: float = 52.0
    t_final: float = 50.0
    cfl_safety: float = 0.5
    fixed_point_tol: float = 1e-12
    max_iterations: int = 8
    m_diag: int = 2
    sample_stride: Optional[int] = None
    gradient_cap: float = 1.0
    window_margin: float = 2.0
    # spatial stencil order of the scheme and of the vector-field diagnostics
    order: int = 4
    workers: int = 1
    # optional forcing S(t, X1, X2) added to the right-hand side
    source: Optional[Callable] = None

    def __post_init__(self):
        if self.dt is None:
            self.dt = self.h / 4

    @property
    def steps(self):
        return int(round((self.t_final - T0) / self.dt))

    @property
    def stride(self):
        if self.sample_stride is not None:
            return int(self.sample_stride)
        return max(1, int(round(1.0 / self.dt)))

    @property
    def history_depth(self):
        return self.order * self.m_diag + 3

    @property
    def lag(self):
        """Steps between the head level and the center of a diagnostic history."""
        return (self.history_depth - 1) // 2

    def profiles(self):
        return make_profile(self.f1), make_profile(self.f2)

    def support_radius(self):
        p1, p2 = self.profiles()
        return max(p1.radius, p2.radius)

    def validate(self):
        if not isinstance(self.tensor, CoefficientTensor):
            raise ConfigInvalid("tensor must be a CoefficientTensor")
        if not (self.h > 0 and self.dt > 0):
            raise ConfigInvalid("h and dt must be positive")
        if not 0 < self.cfl_safety <= 0.5:
            raise ConfigInvalid(f"cfl_safety must lie in (0, 0.5], got {self.cfl_safety}")
        if self.dt > self.cfl_safety * self.h * (1 + 1e-12):
            raise ConfigInvalid(
                f"dt={self.dt:g} exceeds cfl_safety*h={self.cfl_safety * self.h:g}")
        if self.epsilon < 0 or not math.isfinite(self.epsilon):
            raise ConfigInvalid("epsilon must be finite and non-negative")
        if self.t_final < T0:
            raise ConfigInvalid(f"t_final must be at least {T0}")
        n_exact = (self.t_final - T0) / self.dt
        if abs(n_exact - round(n_exact)) > 1e-6:
            raise ConfigInvalid("t_final - 2 must be a whole number of time steps")
        if self.order not in (2, 4):
            raise ConfigInvalid("order must be 2 or 4")
        if self.m_diag < 0 or self.max_iterations < 1 or self.stride < 1:
            raise ConfigInvalid("m_diag >= 0, max_iterations >= 1 and sample_stride >= 1 required")
        radius = self.support_radius()
        if self.L < self.t_final - T0 + radius:
            raise ConfigInvalid(
                f"L={self.L:g} too small: data of radius {radius:g} reaches "
                f"|x|={self.t_final - T0 + radius:g} by t_final")
        Grid2D.square(self.L, self.h)
        return self


# -- state -------------------------------------------------------------------------

@dataclass
class Status:
    den_min: float = 1.0
    den_max: float = 1.0
    grad_max: float = 0.0
    iterations: int = 0
    max_iterations_seen: int = 0


class SolverState:
    """Ring of the last ``D`` levels plus the acceleration at the head level."""

    def __init__(self, cfg, grid, levels, step, acc):
        self.cfg = cfg
        self.grid = grid
        self.levels = list(levels)
        self.step = step
        self.acc = acc
        self._acc_spare = np.zeros_like(acc)
        self.acc_prev = None
        self._ut = np.zeros_like(acc)
        self._stats = np.zeros((grid.n, kernels.N_STATS))
        self._terms = np.zeros((kernels.N_TERMS,) + grid.shape)
        self._g = np.ascontiguousarray(cfg.tensor.array)
        self._src = np.zeros((1, 1))
        self._cols = {}
        self.status = Status()
        self._linear_in_acc = not (np.any(self._g[0]) or np.any(self._g[:, 0, 1:]))

    @property
    def dt(self):
        return self.cfg.dt

    @property
    def t(self):
        return T0 + self.step * self.cfg.dt

    @property
    def head(self):
        return self.levels[-1]

    def times(self):
        k = len(self.levels)
        return T0 + self.cfg.dt * np.arange(self.step - k + 1, self.step + 1)

    def history(self):
        return TimeHistory(self.levels, self.times(), self.grid, self.cfg.dt, self.cfg.order)

    def radius(self, t=None):
        """Window radius in nodes covering the domain of influence at time ``t``."""
        t = self.t if t is None else t
        cfg = self.cfg
        half = cfg.support_radius() + abs(t - T0) + cfg.window_margin
        return int(math.ceil(half / self.grid.h))

    def window(self, t=None, grow=0, k=None):
        """Rows ``[lo, hi)`` and per-row column bounds of the disk of radius ``k + grow``.

        The disk is clipped to the nodes at least ``2 - grow`` from the edge,
        where the widest stencil still fits.
        """
        k = (self.radius(t) if k is None else k) + grow
        key = (k, grow)
        if key not in self._cols:
            if len(self._cols) > 8:
                self._cols.clear()
            n = self.grid.n
            c = n // 2
            edge_lo, edge_hi = 2 - grow, n - 2 + grow
            lo, hi = max(edge_lo, c - k), min(edge_hi, c + k + 1)
            cols = np.zeros((n, 2), dtype=np.int64)
            i = np.arange(lo, hi)
            w = np.floor(np.sqrt(np.maximum(k * k - (i - c) ** 2, 0))).astype(np.int64)
            cols[lo:hi, 0] = np.maximum(edge_lo, c - w)
            cols[lo:hi, 1] = np.minimum(edge_hi, c + w + 1)
            self._cols[key] = (lo, hi, cols)
        return self._cols[key]

    def window_mask(self, t=None, grow=0):
        lo, hi, cols = self.window(t, grow)
        j = np.arange(self.grid.n)
        mask = (j[None, :] >= cols[:, :1]) & (j[None, :] < cols[:, 1:])
        mask[:lo] = False
        mask[hi:] = False
        return mask


def _source_field(state, t, lo, hi):
    cfg = state.cfg
    if cfg.source is None:
        return state._src, False
    # sources are evaluated on the bounding box of the window
    g = state.grid
    if state._src.shape != g.shape:
        state._src = np.zeros(g.shape)
    state._src[lo:hi, lo:hi] = cfg.source(t, g.X1[lo:hi, lo:hi], g.X2[lo:hi, lo:hi])
    return state._src, True


def _check_stats(state, stats, lo, hi, t):
    rows = stats[lo:hi]
    den_min = float(rows[:, kernels.DEN_MIN].min())
    den_max = float(rows[:, kernels.DEN_MAX].max())
    grad = float(rows[:, kernels.GRAD_MAX].max())
    s = state.status
    s.den_min = min(s.den_min, den_min)
    s.den_max = max(s.den_max, den_max)
    s.grad_max = max(s.grad_max, grad)
    if not (math.isfinite(den_min) and math.isfinite(den_max) and math.isfinite(grad)):
        raise FixedPointDivergence(f"non-finite values at t={t:.6g}", time=t)
    if den_min < 0.5 or den_max > 1.5:
        raise DenominatorCollapse(
            f"denominator left [1/2, 3/2] at t={t:.6g} (range {den_min:.4g}..{den_max:.4g})",
            time=t)
    if grad > state.cfg.gradient_cap:
        raise GradientBlowup(f"|du| = {grad:.4g} exceeds cap at t={t:.6g}", time=t)


def resolve_acceleration(state, cur=None, prev=None, ut=None, dt=None, t=None):
    """Solve for ``u_tt`` at the head level; updates ``state.acc`` in place.

    With ``ut`` given (initial data) the velocity is known and a single sweep
    suffices; otherwise the velocity estimate is iterated with the acceleration.
    """
    cfg = state.cfg
    cur = state.levels[-1] if cur is None else cur
    prev = state.levels[-2] if prev is None and ut is None else prev
    dt = cfg.dt if dt is None else dt
    t = state.t if t is None else t
    lo, hi, cols = state.window(t)
    src, use_src = _source_field(state, t, lo, hi)
    stats = state._stats
    h, g, terms = state.grid.h, state._g, state._terms
    kernels.prepare_terms(cur, g, h, cfg.order, lo, hi, cols, src, use_src, terms)
    if ut is not None:
        kernels.acceleration_sweep(ut, state.acc, terms, g, h, cfg.order, lo, hi, cols,
                                   state._acc_spare, stats)
        state.acc, state._acc_spare = state._acc_spare, state.acc
        state.status.iterations = 1
        _check_stats(state, stats, lo, hi, t)
        return state.acc
    tol = cfg.fixed_point_tol
    iters = 1 if state._linear_in_acc else cfg.max_iterations
    vlo, vhi, vcols = state.window(t, grow=cfg.order // 2)
    update = np.inf
    for it in range(1, iters + 1):
        kernels.velocity_estimate(cur, prev, state.acc, dt, vlo, vhi, vcols, state._ut)
        kernels.acceleration_sweep(state._ut, state.acc, terms, g, h, cfg.order, lo, hi, cols,
                                   state._acc_spare, stats)
        state.acc, state._acc_spare = state._acc_spare, state.acc
        _check_stats(state, stats, lo, hi, t)
        last, update = update, float(stats[lo:hi, kernels.UPDATE].max())
        scale = max(1.0, float(stats[lo:hi, kernels.ACC_MAX].max()))
        if update <= tol * scale:
            break
        # a contraction with rate rho leaves at most update * rho / (1 - rho) to go
        rho = update / last if last > 0 else 1.0
        if it > 1 and rho < 0.5 and update * rho / (1.0 - rho) <= tol * scale:
            break
    state.status.iterations = it
    state.status.max_iterations_seen = max(state.status.max_iterations_seen, it)
    if not state._linear_in_acc and it == iters and update > 1e3 * tol * scale:
        raise FixedPointDivergence(
            f"acceleration fixed point stalled at t={t:.6g} (update {update:.3g})", time=t)
    return state.acc


def step(state, direction=1):
    """Advance the head by one step (``direction=-1`` steps backwards in time)."""
    dt = direction * state.cfg.dt
    t = state.t
    old = state.acc
    if not state._linear_in_acc:
        # seed the fixed point with 2 a^{n-1} - a^{n-2}
        lo, hi, cols = state.window(t, grow=state.cfg.order // 2)
        prev = old if state.acc_prev is None else state.acc_prev
        guess = state._acc_spare
        kernels.extrapolate(old, prev, lo, hi, cols, guess)
        state.acc = guess
        state._acc_spare = prev if prev is not old else np.zeros_like(old)
    resolve_acceleration(state, dt=dt, t=t)
    state.acc_prev = old
    lo, hi, cols = state.window(k=max(state.radius(t), state.radius(t + dt)))
    if len(state.levels) >= state.cfg.history_depth:
        out = state.levels.pop(0)
    else:
        out = np.zeros(state.grid.shape)
    kernels.leapfrog(state.levels[-1], state.levels[-2], state.acc, dt, lo, hi, cols, out)
    state.levels.append(out)
    state.step += direction
    return state


def initialize(cfg):
    """State at t = 2 holding levels ``2 - lag dt, ..., 2, 2 + dt``.

    The first step uses the Taylor expansion ``u + dt eps f2 + dt^2/2 a(2)``;
    the levels before t = 2 are produced by running the same scheme backwards,
    so the first diagnostic row is centered at t = 2.
    """
    cfg.validate()
    numba.set_num_threads(max(1, min(int(cfg.workers), numba.config.NUMBA_NUM_THREADS)))
    grid = Grid2D.square(cfg.L, cfg.h)
    p1, p2 = cfg.profiles()
    u0 = np.zeros(grid.shape)
    v0 = np.zeros(grid.shape)
    probe = SolverState(cfg, grid, [u0], 0, np.zeros(grid.shape))
    lo, hi, _ = probe.window(T0)
    if cfg.epsilon:
        box = (slice(lo, hi), slice(lo, hi))
        u0[box] = cfg.epsilon * p1(grid.X1[box], grid.X2[box])
        v0[box] = cfg.epsilon * p2(grid.X1[box], grid.X2[box])
        outside = ~probe.window_mask(T0)
        u0[outside] = 0.0
        v0[outside] = 0.0
    resolve_acceleration(probe, cur=u0, ut=v0, t=T0)
    a0 = probe.acc.copy()
    dt = cfg.dt
    up = u0 + dt * v0 + 0.5 * dt * dt * a0
    down = u0 - dt * v0 + 0.5 * dt * dt * a0
    for f in (up, down):
        f[:2, :] = f[-2:, :] = 0.0
        f[:, :2] = f[:, -2:] = 0.0

    back = SolverState(cfg, grid, [up, u0, down], -1, a0.copy())
    for _ in range(cfg.lag - 1):
        step(back, direction=-1)
    before = back.levels[::-1][: cfg.lag]
    state = SolverState(cfg, grid, before + [u0, up], 1, a0.copy())
    state.status = back.status
    return state


# -- driving -------------------------------------------------------------------------

@dataclass
class RunRecord:
    status: str
    t_end: float
    steps: int
    rows: int
    message: str = ""
    state: Optional[SolverState] = None

    @property
    def completed(self):
        return self.status == "completed"


def run(cfg, sink=None, state=None):
    """Integrate to ``t_final``, calling ``sink(history, state)`` every ``stride`` steps.

    The history passed to the sink is centered at the sample time and holds
    ``history_depth`` levels. Its arrays are reused by later steps, so sinks
    must copy anything they keep. Breakdown is reported, not raised.
    """
    if state is None:
        try:
            state = initialize(cfg)
        except Breakdown as exc:
            return RunRecord("breakdown", T0, 0, 0, f"{type(exc).__name__}: {exc}", None)
    else:
        cfg = state.cfg
    lag = cfg.lag
    n = cfg.steps
    stride = cfg.stride
    samples = set(range(0, n + 1, stride)) | {n}
    rows = 0
    try:
        while True:
            center = state.step - lag
            if len(state.levels) >= cfg.history_depth and center in samples:
                if sink is not None:
                    sink(state.history(), state)
                rows += 1
            if center >= n:
                break
            step(state)
    except Breakdown as exc:
        t = exc.time if exc.time is not None else state.t
        return RunRecord("breakdown", t, max(0, min(n, state.step - 1)), rows,
                         f"{type(exc).__name__}: {exc}", state)
    return RunRecord("completed", T0 + n * cfg.dt, n, rows, "", state)


# -- checkpoints ---------------------------------------------------------------------

_MAGIC = b"NWCKPT02"
_CKPT = struct.Struct("<qqd")


def save_checkpoint(path, state):
    """Header (magic, level count, head step, dt), the ring levels, then the last two accelerations."""
    g = state.grid
    times = state.times()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_CKPT.pack(len(state.levels), state.step, state.cfg.dt))
        for f, t in zip(state.levels, times):
            write_snapshot(fh, f, g.h, g.L, t)
        write_snapshot(fh, state.acc, g.h, g.L, times[-1])
        prev = state.acc if state.acc_prev is None else state.acc_prev
        write_snapshot(fh, prev, g.h, g.L, times[-2])


def load_checkpoint(path, cfg):
    """Rebuild a state from ``path``; ``cfg`` must describe the same run."""
    cfg.validate()
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ConfigInvalid(f"{path} is not a checkpoint file")
        count, head, dt = _CKPT.unpack(fh.read(_CKPT.size))
        if dt != cfg.dt:
            raise ConfigInvalid("checkpoint time step does not match the config")
        levels = []
        for _ in range(count):
            f, h, L, _t = read_snapshot(fh)
            levels.append(f)
        acc, h, L, _t = read_snapshot(fh)
        acc_prev, h, L, _t = read_snapshot(fh)
    grid = Grid2D.square(cfg.L, cfg.h)
    if acc.shape != grid.shape:
        raise ConfigInvalid("checkpoint grid does not match the config")
    numba.set_num_threads(max(1, min(int(cfg.workers), numba.config.NUMBA_NUM_THREADS)))
    state = SolverState(cfg, grid, levels, head, acc)
    state.acc_prev = acc_prev
    return state


def with_tensor(cfg, tensor, **changes):
    return replace(cfg, tensor=tensor, **changes)
