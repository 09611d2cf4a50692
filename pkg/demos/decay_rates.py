"""Dispersive decay of a linear wave from bump data.

Fits log-log slopes of the sup-norm monitors over t in [10, T]. The global
gradient decays like t^{-1/2}; second derivatives away from the light cone
decay faster. Run with ``python3 demos/decay_rates.py``; takes a few minutes.
"""

# %%
from nullwave.diagnostics import RATES, DiagnosticsSink, fit_slope
from nullwave.solver import SolverConfig, run

cfg = SolverConfig(epsilon=0.01, h=1.0 / 16, L=32.0, t_final=30.0)
sink = DiagnosticsSink(m=2)
record = run(cfg, sink)
print(record.status, "rows:", record.rows)

# %%
t = sink.column("t")
for name, predicted in RATES.items():
    slope = fit_slope(t, sink.column(name), window=(10.0, cfg.t_final))
    print(f"{name:12s} slope {slope:+.3f}  (predicted {predicted:+.1f})")
