"""Global convergence order from a manufactured solution.

``u* = A cos(w (t - 2)) (1 - |x|^2)^8`` solves the forced equation whose source
is computed exactly; the max error over the run shrinks like h^2.
Run with ``python3 demos/manufactured_convergence.py``.
"""

# %%
from nullwave import preset
from nullwave.verify import mms_errors, observed_orders

for label, g in (("linear", None), ("FA0", preset("FA0")), ("FD3", preset("FD3"))):
    errors = mms_errors(g, grids=(1.0 / 8, 1.0 / 16, 1.0 / 32))
    orders = ", ".join(f"{p:.2f}" for p in observed_orders(errors))
    print(f"{label:6s} errors {', '.join(f'{e:.2e}' for e in errors)}  orders {orders}")
