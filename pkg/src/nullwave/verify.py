"""Regression suite behind ``nullwave verify``.

Each check returns a :class:`Result` with the measured value next to the
requirement. Checks never raise: an exception inside a check is reported as a
failure. Every solver run made by the suite records its diagnostic rows, and
the last check asserts the ghost-weight sandwich and flux monotonicity on all
of them.
"""

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import algebra, diagnostics
from .diagnostics import DiagnosticsSink, drift_ratio, fit_slope
from .errors import Breakdown
from .grid import Grid2D
from .manufactured import Manufactured
from .solver import SolverConfig, run

# the contrast runs: amplitude at which g000 = 1 leaves the small-data regime
# while FA0 does not, on a coarse grid over a short horizon
CONTRAST = dict(epsilon=0.15, h=1.0 / 16, L=22.0, t_final=20.0)

TREND = dict(epsilon=0.01, h=1.0 / 32, L=52.0, t_final=50.0)
DECAY = dict(epsilon=0.01, h=1.0 / 16, L=52.0, t_final=50.0)
CONSERVATION = dict(epsilon=0.01, h=1.0 / 64, L=11.0, t_final=12.0, m_diag=0)
MMS_GRIDS = (1.0 / 16, 1.0 / 32, 1.0 / 64)
MMS_SOLUTION = dict(amplitude=0.02, omega=8.0)
IDENTITY_GRIDS = (1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64)


@dataclass
class Result:
    key: str
    title: str
    passed: bool
    measured: str
    required: str
    seconds: float = 0.0

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] {self.key:<14} {self.title}: {self.measured} "
                f"(required: {self.required}) [{self.seconds:.1f}s]")


@dataclass
class Context:
    seed: int = 20240611
    sinks: list = field(default_factory=list)
    runs: dict = field(default_factory=dict)

    def rng(self, offset=0):
        return np.random.default_rng(self.seed + offset)

    def run(self, name, cfg, m=None, cone_flux=False):
        """Run once per ``name``; keeps the sink for the sandwich check."""
        if name not in self.runs:
            sink = DiagnosticsSink(cfg.tensor, m=cfg.m_diag if m is None else m,
                                   cone_flux=cone_flux)
            record = run(cfg, sink)
            record.state = None
            self.sinks.append((name, sink))
            self.runs[name] = (record, sink)
        return self.runs[name]


def _random_fraction(rng, size=9):
    num = int(rng.integers(-size, size + 1))
    den = int(rng.integers(1, size + 1))
    return Fraction(num, den)


def random_decomposition(rng, strong_only=False):
    vec = [_random_fraction(rng) for _ in range(11)]
    if strong_only:
        vec[6:] = [Fraction(0)] * 5
    return algebra.Decomposition.from_vector(vec)


def random_null_tensor(rng):
    params = algebra.ParameterVector(tuple(_random_fraction(rng) for _ in range(11)))
    return algebra.synthesize_from_parameters(params)


# -- the checks ---------------------------------------------------------------

def check_roundtrip(ctx, count=1000, budget=10.0):
    rng = ctx.rng(1)
    start = time.perf_counter()
    bad = 0
    for _ in range(count):
        d = random_decomposition(rng)
        if algebra.classify(algebra.synthesize(d)) != d:
            bad += 1
    elapsed = time.perf_counter() - start
    return (bad == 0 and elapsed < budget,
            f"{bad} mismatches in {count}, {elapsed:.2f}s",
            f"0 mismatches, < {budget:g}s")


def check_checkers(ctx, count=1000):
    rng = ctx.rng(2)
    tensors = []
    for n in range(count):
        if n % 2:
            tensors.append(random_null_tensor(rng))
        else:
            tensors.append(algebra.synthesize(random_decomposition(rng, strong_only=n % 4 == 0)))
    tensors += [algebra.preset(name) for name in algebra.PRESETS]
    disagree = 0
    strong = 0
    for g in tensors:
        null = {algebra.check_null(g), algebra.check_null_relations(g),
                algebra.check_null_sampled(g, tol=1e-12)}
        sn = {algebra.check_strong_null(g), algebra.check_strong_null_relations(g),
              algebra.check_strong_null_sampled(g, tol=1e-12)}
        disagree += (len(null) > 1) + (len(sn) > 1)
        strong += algebra.check_strong_null(g)
    return (disagree == 0,
            f"{disagree} disagreements over {len(tensors)} tensors ({strong} strong)",
            "all three routes agree")


def check_dichotomy(ctx):
    wrong = []
    for name in algebra.FORM_NAMES:
        g = algebra.preset(name)
        if name[1] in "AB":
            ok = algebra.check_strong_null(g)
        else:
            ok = algebra.check_null(g) and not algebra.check_strong_null(g)
        if not ok:
            wrong.append(name)
    got = algebra.classify(algebra.preset("GC0"))
    want = algebra.parse_decomposition("C1[1]=1/2 C2[1]=-1 C4[2]=-1")
    ok = not wrong and got == want
    return ok, f"misclassified forms: {wrong or 'none'}; GC0 = {got}", f"A/B strong, C/D weak; GC0 = {want}"


def _gauss(cx, cy, a=1.0):
    def f(t, X1, X2):
        return np.exp(-a * ((X1 - cx) ** 2 + (X2 - cy) ** 2)) * np.sin(t)
    return f


def check_identity(ctx, grids=IDENTITY_GRIDS, L=3.0, t=3.0):
    f = _gauss(0.2, -0.1)
    hfun = _gauss(-0.3, 0.25, a=0.8)
    ratios = {}
    for name in ("FA0", "FD3"):
        g = algebra.preset(name)
        res = [diagnostics.null_identity_residual(g, f, hfun, Grid2D.square(L, h), t)
               for h in grids]
        ratios[name] = [res[k] / res[k + 1] for k in range(len(res) - 1)]
    ok = all(abs(r - 4.0) <= 1.0 for rs in ratios.values() for r in rs)
    text = "; ".join(f"{k}: " + ", ".join(f"{r:.3f}" for r in v) for k, v in ratios.items())
    return ok, f"refinement ratios {text}", "each ratio in 4 +- 1"


def check_hardy(ctx, count=50, tol=1e-8):
    rng = ctx.rng(5)
    violations = 0
    worst = 0.0
    for _ in range(count):
        M = float(rng.uniform(0.5, 6.0))
        f, df = diagnostics.random_hardy_profile(rng, M)
        lhs, rhs = diagnostics.hardy_check(f, M, df)
        if lhs > 4.0 * rhs + tol:
            violations += 1
        if rhs > 0:
            worst = max(worst, lhs / rhs)
    return violations == 0, f"{violations} violations, largest lhs/rhs = {worst:.4f}", "0 violations with constant 4"


def mms_errors(tensor=None, grids=MMS_GRIDS, t_final=4.0, every=0.125, **kw):
    """Max-norm errors of the manufactured solution over samples every ``every`` time units.

    The defaults make the time error dominate: with fourth-order space and
    ``dt = h/4`` a slow manufactured solution would show the spatial order.
    """
    kw = {**MMS_SOLUTION, **kw}
    mf = Manufactured(algebra.CoefficientTensor.zero() if tensor is None else tensor, **kw)
    errors = []
    for h in grids:
        cfg = mf.config(h=h, L=mf.R + t_final, t_final=t_final, m_diag=0)
        cfg.sample_stride = max(1, int(round(every / cfg.dt)))
        worst = [0.0]

        def sink(hist, state):
            g = hist.grid
            worst[0] = max(worst[0], float(np.max(np.abs(hist.current - mf.exact(hist.t, g.X1, g.X2)))))

        record = run(cfg, sink)
        if not record.completed:
            raise Breakdown(f"manufactured run at h={h:g}: {record.message}")
        errors.append(worst[0])
    return errors


def observed_orders(errors):
    return [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]


def check_linear(ctx):
    cfg = SolverConfig(**CONSERVATION)
    record, sink = ctx.run("linear-conservation", cfg)
    E0 = sink.column("E0")
    drift = float(np.max(np.abs(E0 / E0[0] - 1.0)))
    orders = observed_orders(mms_errors())
    ok = record.completed and drift < 1e-6 and all(abs(p - 2.0) <= 0.2 for p in orders)
    return (ok, f"E0 drift {drift:.2e}; orders " + ", ".join(f"{p:.3f}" for p in orders),
            "drift < 1e-6; order 2.0 +- 0.2")


def check_trend(ctx):
    cfg = SolverConfig(tensor=algebra.preset("FA0"), **TREND)
    record, sink = ctx.run("FA0-trend", cfg, cone_flux=True)
    if not record.completed:
        return False, f"{record.status} at t={record.t_end:.3f}: {record.message}", "completed run"
    E2 = sink.column("E2")
    t = sink.column("t")
    ratio = E2 / E2[0]
    cum = sink.column("flux_cum")
    total = cum[-1]
    late = total - np.interp(t[-1] - 10.0, t, cum)
    frac = late / total if total > 0 else 0.0
    ok = bool(ratio.min() >= 0.9 and ratio.max() <= 1.1 and frac < 0.05)
    return (ok, f"E2 ratio in [{ratio.min():.4f}, {ratio.max():.4f}], last-10 flux share {frac:.2%}",
            "ratio in [0.9, 1.1]; share < 5%")


def check_decay(ctx):
    cfg = SolverConfig(**DECAY)
    record, sink = ctx.run("linear-decay", cfg)
    t = sink.column("t")
    glob = fit_slope(t, sink.column("sup_du"), window=(10.0, cfg.t_final))
    inner = fit_slope(t, sink.column("interior_d2"), window=(10.0, cfg.t_final))
    gap = glob - inner
    ok = record.completed and abs(glob + 0.5) <= 0.1 and gap >= 0.5
    return (ok, f"sup|du| slope {glob:.3f}, interior Hessian slope {inner:.3f} (gap {gap:.3f})",
            "slope -0.5 +- 0.1; gap >= 0.5")


def check_contrast(ctx):
    cfgs = {name: SolverConfig(tensor=g, **CONTRAST)
            for name, g in (("FA0", algebra.preset("FA0")),
                            ("g000", algebra.CoefficientTensor.from_dict({(0, 0, 0): 1})))}
    out = {}
    for name, cfg in cfgs.items():
        record, sink = ctx.run(f"contrast-{name}", cfg)
        out[name] = (record, drift_ratio(sink.column(f"E{cfg.m_diag}")) if sink.reports else math.nan)
    fa0, fa0_drift = out["FA0"]
    bad, bad_drift = out["g000"]
    broke = bad.status == "breakdown"
    ok = fa0.completed and (broke or bad_drift >= 5 * fa0_drift)
    what = (f"breakdown at t={bad.t_end:.3f} ({bad.message.split(':')[0]})" if broke
            else f"completed, drift {bad_drift:.3f}")
    return (ok, f"eps={CONTRAST['epsilon']}: g000 {what}; FA0 {fa0.status}, drift {fa0_drift:.4f}",
            "g000 breaks down or drifts 5x FA0; FA0 completes")


def check_sandwich(ctx):
    if not ctx.sinks:
        cfg = SolverConfig(tensor=algebra.preset("FA0"), epsilon=0.01, h=1.0 / 16, L=8.0, t_final=8.0)
        ctx.run("sandwich-smoke", cfg)
    rows = 0
    bad = []
    for name, sink in ctx.sinks:
        cum = sink.column("flux_cum")
        flux = sink.column("flux")
        ok_sandwich = all(r.sandwich_ok for r in sink.reports)
        ok_flux = bool(np.all(flux >= 0) and np.all(np.diff(cum) >= 0))
        rows += len(sink.reports)
        if not (ok_sandwich and ok_flux):
            bad.append(name)
    return (not bad, f"{rows} samples over {len(ctx.sinks)} runs, failing runs: {bad or 'none'}",
            "sandwich and monotone flux at every sample")


CHECKS = (
    ("roundtrip", "classification round-trip", check_roundtrip),
    ("checkers", "checker equivalence", check_checkers),
    ("dichotomy", "strong-null dichotomy", check_dichotomy),
    ("identity", "null-form identity refinement", check_identity),
    ("hardy", "refined Hardy inequality", check_hardy),
    ("linear", "linear solver health", check_linear),
    ("trend", "FA0 energy trend", check_trend),
    ("decay", "dispersive decay", check_decay),
    ("contrast", "non-null contrast", check_contrast),
    ("sandwich", "ghost-weight sandwich and flux", check_sandwich),
)
KEYS = tuple(key for key, _, _ in CHECKS)


def run_check(key, ctx=None):
    ctx = Context() if ctx is None else ctx
    for k, title, fn in CHECKS:
        if k == key:
            start = time.perf_counter()
            try:
                passed, measured, required = fn(ctx)
            except Exception as exc:  # reported, not raised
                passed, measured, required = False, f"error: {type(exc).__name__}: {exc}", "no error"
            return Result(k, title, bool(passed), measured, required, time.perf_counter() - start)
    raise KeyError(f"unknown check {key!r}; known: {', '.join(KEYS)}")


def run_suite(keys=None, out=print, ctx=None):
    """Run the selected checks in catalog order; ``out`` receives one line per check."""
    ctx = Context() if ctx is None else ctx
    selected = KEYS if keys is None else [k for k in KEYS if k in set(keys)]
    unknown = set(keys or ()) - set(KEYS)
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(sorted(unknown))}")
    results = []
    for key in selected:
        result = run_check(key, ctx)
        if out is not None:
            out(result.line())
        results.append(result)
    return results
