"""Null forms in two space dimensions: checking, classifying, synthesizing.

Run with ``python3 demos/classify_forms.py``.
"""

# %%
# A quadratic form g^{kij} d_k u d_ij u is null when its symbol vanishes on the
# light cone w = (-1, cos t, sin t). Every null tensor is an exact rational
# combination of eleven basis forms (written C1..C4 by family, index in
# brackets); the F^A and F^B families also satisfy the
# stronger tangency condition.
from nullwave import algebra

for name in algebra.FORM_NAMES:
    g = algebra.preset(name)
    print(f"{name:4s} null={algebra.check_null(g)!s:5s} strong={algebra.check_strong_null(g)!s:5s} "
          f"-> {algebra.classify(g)}")

# %%
# Decompositions round-trip exactly through the tensor.
d = algebra.parse_decomposition("C1[0]=2/3 C4[1]=-1 C2[2]=5")
g = algebra.synthesize(d)
print("\nsynthesized:", g)
print("classified back:", algebra.classify(g))

# %%
# The tangency symbol of a weak null form is a nonzero trigonometric polynomial.
g = algebra.preset("GC0")
print("\nGC0 =", algebra.classify(g))
print("tangency symbol:", algebra.tangency_symbol(g))

# %%
# A non-null tensor fails with the offending symbol coefficients.
g = algebra.CoefficientTensor.from_dict({(0, 0, 0): 1})
print("\ng000 = 1 null?", algebra.check_null(g), algebra.full_symbol(g).nonzero())
