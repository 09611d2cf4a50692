"""Exact algebra of quadratic quasilinear null forms in two space dimensions.

A nonlinearity ``g^{kij} d_k u d_ij u`` (indices 0..2, 0 = time) is stored as a
:class:`CoefficientTensor` of 18 exact rationals, symmetric in ``(i, j)``.
Restricting to null covectors ``w = (-1, cos t, sin t)`` turns every condition
into the vanishing of a trigonometric polynomial of degree at most 3, which is
represented exactly by :class:`TrigPoly`.

Everything here works in :class:`fractions.Fraction`; floating point only
appears in :func:`evaluate_nonlinearity` and the ``evaluate`` helpers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .errors import NotNull, ParseError, SingularBasis, UnknownForm

__all__ = [
    "PAIRS",
    "CoefficientTensor",
    "TrigPoly",
    "ParameterVector",
    "Decomposition",
    "SemilinearTensor",
    "Classifier",
    "cone_symbol",
    "full_symbol",
    "tangency_symbol",
    "h_symbol",
    "null_relations",
    "strong_null_relations",
    "check_null",
    "check_null_relations",
    "check_strong_null",
    "check_strong_null_relations",
    "check_clm_null",
    "check_null_sampled",
    "check_strong_null_sampled",
    "direct_symbols",
    "null_defect",
    "parametrize",
    "synthesize_from_parameters",
    "basis_tensor",
    "BASIS_FORMS",
    "FORM_NAMES",
    "classify",
    "synthesize",
    "evaluate_nonlinearity",
    "parse_tensor",
    "format_tensor",
    "parse_decomposition",
    "preset",
    "PRESETS",
]

# unordered index pairs {i, j}, in storage order
PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_PAIR_INDEX = {p: n for n, p in enumerate(PAIRS)}


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # floats are accepted only when they are exact binary rationals
        return Fraction(x)
    return Fraction(x)


def _slot(k, i, j):
    if not (k in (0, 1, 2) and i in (0, 1, 2) and j in (0, 1, 2)):
        raise IndexError(f"tensor index out of range: {(k, i, j)}")
    return 6 * k + _PAIR_INDEX[(min(i, j), max(i, j))]


@dataclass(frozen=True)
class CoefficientTensor:
    """The 18 independent coefficients ``g^{k{ij}}``.

    ``entries[6*k + p]`` holds ``g^{kij}`` for the ``p``-th pair of
    :data:`PAIRS`; ``g[k, i, j]`` and ``g[k, j, i]`` read the same slot.
    """

    entries: tuple

    def __post_init__(self):
        entries = tuple(_frac(v) for v in self.entries)
        if len(entries) != 18:
            raise ValueError("a coefficient tensor has exactly 18 entries")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zero(cls):
        return cls((Fraction(0),) * 18)

    @classmethod
    def from_dict(cls, mapping):
        """Build from ``{(k, i, j): value}``; both orders of ``(i, j)`` may
        appear but must then agree."""
        slots = [None] * 18
        for (k, i, j), value in mapping.items():
            n = _slot(k, i, j)
            value = _frac(value)
            if slots[n] is not None and slots[n] != value:
                raise ValueError(f"conflicting values for g[{k}][{i}][{j}]")
            slots[n] = value
        return cls(tuple(Fraction(0) if v is None else v for v in slots))

    def __getitem__(self, key):
        k, i, j = key
        return self.entries[_slot(k, i, j)]

    def __add__(self, other):
        return CoefficientTensor(tuple(a + b for a, b in zip(self.entries, other.entries)))

    def __sub__(self, other):
        return CoefficientTensor(tuple(a - b for a, b in zip(self.entries, other.entries)))

    def __neg__(self):
        return CoefficientTensor(tuple(-a for a in self.entries))

    def __mul__(self, scalar):
        s = _frac(scalar)
        return CoefficientTensor(tuple(s * a for a in self.entries))

    __rmul__ = __mul__

    def is_zero(self):
        return not any(self.entries)

    def items(self):
        """Nonzero entries as ``((k, i, j), value)`` with ``i <= j``."""
        for n, value in enumerate(self.entries):
            if value:
                k, p = divmod(n, 6)
                yield (k, *PAIRS[p]), value

    @cached_property
    def array(self):
        """Symmetric float array ``a[k, i, j]`` (read-only)."""
        a = np.zeros((3, 3, 3))
        for (k, i, j), value in self.items():
            a[k, i, j] = a[k, j, i] = float(value)
        a.flags.writeable = False
        return a

    def __repr__(self):
        body = ", ".join(f"g{k}{i}{j}={v}" for (k, i, j), v in self.items())
        return f"CoefficientTensor({body or '0'})"


_LABELS = ("1", "cos1", "cos2", "cos3", "sin1", "sin2", "sin3")


@dataclass(frozen=True)
class TrigPoly:
    """``c0 + sum_n cos_coeffs[n-1] cos(n t) + sin_coeffs[n-1] sin(n t)``, n <= 3."""

    c0: Fraction = Fraction(0)
    cos_coeffs: tuple = (Fraction(0),) * 3
    sin_coeffs: tuple = (Fraction(0),) * 3

    def __post_init__(self):
        cos_c = tuple(_frac(v) for v in self.cos_coeffs)
        sin_c = tuple(_frac(v) for v in self.sin_coeffs)
        if len(cos_c) != 3 or len(sin_c) != 3:
            raise ValueError("TrigPoly stores harmonics 1..3 only")
        object.__setattr__(self, "c0", _frac(self.c0))
        object.__setattr__(self, "cos_coeffs", cos_c)
        object.__setattr__(self, "sin_coeffs", sin_c)

    @classmethod
    def _from_lists(cls, cos_full, sin_full):
        # cos_full[n], sin_full[n] for n = 0..N; harmonics above 3 must vanish
        if any(cos_full[4:]) or any(sin_full[4:]):
            raise ValueError("harmonic above 3 in a cone symbol")
        pad = lambda seq: list(seq[1:4]) + [Fraction(0)] * (3 - len(seq[1:4]))
        return cls(cos_full[0], tuple(pad(cos_full)), tuple(pad(sin_full)))

    def _lists(self):
        return [self.c0, *self.cos_coeffs], [Fraction(0), *self.sin_coeffs]

    def coefficients(self):
        """The 7 stored coefficients in the order of :data:`LABELS`."""
        return (self.c0, *self.cos_coeffs, *self.sin_coeffs)

    def labelled(self):
        return dict(zip(_LABELS, self.coefficients()))

    def nonzero(self):
        return {k: v for k, v in self.labelled().items() if v}

    def is_zero(self):
        return not any(self.coefficients())

    def max_abs_coefficient(self):
        return max(abs(c) for c in self.coefficients())

    def __add__(self, other):
        return TrigPoly(
            self.c0 + other.c0,
            tuple(a + b for a, b in zip(self.cos_coeffs, other.cos_coeffs)),
            tuple(a + b for a, b in zip(self.sin_coeffs, other.sin_coeffs)),
        )

    def __neg__(self):
        return TrigPoly(-self.c0, tuple(-a for a in self.cos_coeffs),
                        tuple(-a for a in self.sin_coeffs))

    def __sub__(self, other):
        return self + (-other)

    def times_cos(self):
        """Exact product with ``cos t`` (product-to-sum)."""
        c, s = self._lists()
        oc = [Fraction(0)] * 5
        os_ = [Fraction(0)] * 5
        for n in range(4):
            # cos t cos nt = (cos(n+1)t + cos(n-1)t)/2, likewise for sin
            oc[n + 1] += c[n] / 2
            os_[n + 1] += s[n] / 2
            if n == 0:
                oc[1] += c[0] / 2
            else:
                oc[n - 1] += c[n] / 2
                os_[n - 1] += s[n] / 2
        os_[0] = Fraction(0)
        return TrigPoly._from_lists(oc, os_)

    def times_sin(self):
        """Exact product with ``sin t``."""
        c, s = self._lists()
        oc = [Fraction(0)] * 5
        os_ = [Fraction(0)] * 5
        for n in range(4):
            # sin t cos nt = (sin(n+1)t - sin(n-1)t)/2
            # sin t sin nt = (cos(n-1)t - cos(n+1)t)/2
            os_[n + 1] += c[n] / 2
            oc[n + 1] -= s[n] / 2
            if n == 0:
                os_[1] += c[0] / 2
            else:
                os_[n - 1] -= c[n] / 2
                oc[n - 1] += s[n] / 2
        os_[0] = Fraction(0)
        return TrigPoly._from_lists(oc, os_)

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, float(self.c0))
        for n in range(1, 4):
            out = out + float(self.cos_coeffs[n - 1]) * np.cos(n * theta)
            out = out + float(self.sin_coeffs[n - 1]) * np.sin(n * theta)
        return out

    def __str__(self):
        terms = [f"{v}*{k}" if k != "1" else str(v) for k, v in self.nonzero().items()]
        return " + ".join(terms) if terms else "0"


TrigPoly.LABELS = _LABELS


def cone_symbol(g, k):
    """``alpha_k(t) = g^{kij} w_i w_j`` on the null covector ``w = (-1, cos t, sin t)``."""
    if k not in (0, 1, 2):
        raise IndexError(k)
    return TrigPoly(
        g[k, 0, 0] + (g[k, 1, 1] + g[k, 2, 2]) / 2,
        (-2 * g[k, 0, 1], (g[k, 1, 1] - g[k, 2, 2]) / 2, 0),
        (-2 * g[k, 0, 2], g[k, 1, 2], 0),
    )


def full_symbol(g):
    """``g^{kij} w_k w_i w_j`` as an exact trigonometric polynomial."""
    return -cone_symbol(g, 0) + cone_symbol(g, 1).times_cos() + cone_symbol(g, 2).times_sin()


def tangency_symbol(g):
    """``-sin t * alpha_1 + cos t * alpha_2``; vanishes iff the tangency condition holds."""
    return cone_symbol(g, 2).times_cos() - cone_symbol(g, 1).times_sin()


def h_symbol(g):
    """``cos t * alpha_1 + sin t * alpha_2``, the radial part left after the tangency condition."""
    return cone_symbol(g, 1).times_cos() + cone_symbol(g, 2).times_sin()


def null_relations(g):
    """Residuals of the seven linear relations characterising null tensors.

    Each returned value is zero iff the corresponding relation holds; this is
    a route to :func:`check_null` independent of the symbol computation.
    """
    return (
        g[1, 0, 1] + (g[0, 0, 0] + g[0, 1, 1]) / 2,
        g[2, 0, 2] + (g[0, 0, 0] + g[0, 2, 2]) / 2,
        2 * g[0, 0, 1] + g[1, 0, 0] + g[1, 1, 1],
        2 * g[0, 0, 2] + g[2, 0, 0] + g[2, 2, 2],
        g[0, 1, 2] + g[1, 0, 2] + g[2, 0, 1],
        g[2, 1, 2] - (g[1, 1, 1] - g[1, 2, 2]) / 2,
        g[1, 1, 2] + (g[2, 1, 1] - g[2, 2, 2]) / 2,
    )


def strong_null_relations(g):
    """The five extra relations which, on top of :func:`null_relations`,
    characterise the strong null condition."""
    return (
        g[1, 0, 2],
        g[2, 0, 1],
        g[1, 0, 1] - g[2, 0, 2],
        g[0, 0, 2] + g[1, 1, 2],
        g[0, 0, 1] + g[2, 1, 2],
    )


def check_null(g):
    return full_symbol(g).is_zero()


def check_null_relations(g):
    return not any(null_relations(g))


def check_strong_null(g):
    return check_null(g) and tangency_symbol(g).is_zero()


def check_strong_null_relations(g):
    return check_null_relations(g) and not any(strong_null_relations(g))


def null_defect(g):
    """Largest absolute coefficient of the full symbol (0 exactly for null tensors)."""
    return full_symbol(g).max_abs_coefficient()


@dataclass(frozen=True)
class SemilinearTensor:
    """Nonlinearity ``A_l d_l (N_ij d_i u d_j u)`` with constant ``N`` (3x3) and ``A``."""

    N: tuple
    A: tuple = (1, 0, 0)

    def __post_init__(self):
        N = tuple(tuple(_frac(v) for v in row) for row in self.N)
        A = tuple(_frac(v) for v in self.A)
        if len(N) != 3 or any(len(row) != 3 for row in N) or len(A) != 3:
            raise ValueError("N must be 3x3 and A of length 3")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "A", A)

    def to_tensor(self):
        """Expand to ``g^{kij}``: the product rule gives ``A_l (N_kj + N_jk) d_k u d_lj u``."""
        N, A = self.N, self.A
        acc = {}
        for k in range(3):
            for l in range(3):
                for j in range(3):
                    c = A[l] * (N[k][j] + N[j][k])
                    if c:
                        key = _slot(k, l, j)
                        # ordered (l, j) and (j, l) share one symmetric slot
                        share = c if l == j else c / 2
                        acc[key] = acc.get(key, Fraction(0)) + share
        entries = [Fraction(0)] * 18
        for key, value in acc.items():
            entries[key] += value
        return CoefficientTensor(tuple(entries))


def check_clm_null(s):
    N = s.N
    return (
        N[0][0] + (N[1][1] + N[2][2]) / 2 == 0
        and N[0][1] + N[1][0] == 0
        and N[0][2] + N[2][0] == 0
        and N[1][2] + N[2][1] == 0
        and N[1][1] == N[2][2]
    )


# -- parametrisation of the null subspace ------------------------------------

# the 11 free entries, a_1..a_11
_PARAM_SLOTS = (
    (0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 1, 1), (0, 1, 2), (0, 2, 2),
    (1, 0, 0), (2, 2, 2), (1, 0, 2), (1, 2, 2), (1, 1, 2),
)


@dataclass(frozen=True)
class ParameterVector:
    a: tuple

    def __post_init__(self):
        a = tuple(_frac(v) for v in self.a)
        if len(a) != 11:
            raise ValueError("11 parameters expected")
        object.__setattr__(self, "a", a)

    def __getitem__(self, j):
        """1-based access, ``v[1]`` is a_1."""
        return self.a[j - 1]

    def __str__(self):
        return " ".join(f"a{j}={v}" for j, v in enumerate(self.a, 1))


def parametrize(g):
    if not check_null(g):
        raise NotNull("tensor does not satisfy the null condition", full_symbol(g).nonzero())
    return ParameterVector(tuple(g[key] for key in _PARAM_SLOTS))


def synthesize_from_parameters(v):
    a = (None, *v.a)
    entries = {key: a[n] for n, key in enumerate(_PARAM_SLOTS, 1)}
    entries.update({
        (1, 0, 1): -(a[1] + a[4]) / 2,
        (2, 0, 2): -(a[1] + a[6]) / 2,
        (1, 1, 1): -2 * a[2] - a[7],
        (2, 0, 0): -2 * a[3] - a[8],
        (2, 0, 1): -a[5] - a[9],
        (2, 1, 2): -(2 * a[2] + a[7] + a[10]) / 2,
        (2, 1, 1): a[8] - 2 * a[11],
    })
    return CoefficientTensor.from_dict(entries)


# -- named forms -------------------------------------------------------------

def _form(*terms):
    """Tensor of ``sum coeff * d_k u d_ij u``; ``terms`` are ``(coeff, k, i, j)``.

    An off-diagonal second derivative ``d_ij`` with ``i != j`` is shared
    between the two symmetric slots, hence the factor 1/2.
    """
    entries = [Fraction(0)] * 18
    for coeff, k, i, j in terms:
        c = Fraction(coeff)
        entries[_slot(k, i, j)] += c if i == j else c / 2
    return CoefficientTensor(tuple(entries))


def _fa(i):
    # d_i(|d_t u|^2 - |grad u|^2) = 2 d_0u d_0i u - 2 d_1u d_1i u - 2 d_2u d_2i u
    return _form((2, 0, 0, i), (-2, 1, 1, i), (-2, 2, 2, i))


def _fb(i):
    return _form((1, i, 0, 0), (-1, i, 1, 1), (-1, i, 2, 2))


def _gc(i):
    return _form((1, 0, 1, i), (-1, 1, 0, i))


def _gd(i):
    return _form((1, 1, 2, i), (-1, 2, 1, i))


_FORMS = {
    "FA0": _fa(0), "FA1": _fa(1), "FA2": _fa(2),
    "FB0": _fb(0), "FB1": _fb(1), "FB2": _fb(2),
    "FC1": _form((1, 0, 1, 2), (-1, 1, 0, 2)),
    "FC2": _form((1, 1, 0, 2), (-1, 2, 0, 1)),
    "FD1": _form((1, 0, 1, 1), (-1, 1, 0, 1)),
    "FD2": _form((1, 1, 2, 2), (-1, 2, 1, 2)),
    "FD3": _form((1, 2, 1, 1), (-1, 1, 1, 2)),
    "GC0": _gc(0), "GC1": _gc(1), "GC2": _gc(2),
    "GD0": _gd(0), "GD1": _gd(1), "GD2": _gd(2),
}

# order of the decomposition basis: C1[0..2], C2[0..2], C3[1..2], C4[1..3]
BASIS_FORMS = ("FA0", "FA1", "FA2", "FB0", "FB1", "FB2", "FC1", "FC2", "FD1", "FD2", "FD3")
FORM_NAMES = tuple(_FORMS)


def basis_tensor(form):
    try:
        return _FORMS[form]
    except KeyError:
        raise UnknownForm(f"unknown form {form!r}; expected one of {', '.join(FORM_NAMES)}") from None


@dataclass(frozen=True)
class Decomposition:
    """Coefficients over FA0..FA2, FB0..FB2, FC1..FC2, FD1..FD3.

    ``cC[0]`` multiplies FC1 and ``cD[0]`` multiplies FD1; the text form uses
    the 1-based labels ``C3[1]``, ``C4[1]``.
    """

    cA: tuple = (0, 0, 0)
    cB: tuple = (0, 0, 0)
    cC: tuple = (0, 0)
    cD: tuple = (0, 0, 0)

    def __post_init__(self):
        for name, size in (("cA", 3), ("cB", 3), ("cC", 2), ("cD", 3)):
            vals = tuple(_frac(v) for v in getattr(self, name))
            if len(vals) != size:
                raise ValueError(f"{name} needs {size} entries")
            object.__setattr__(self, name, vals)

    @classmethod
    def from_vector(cls, vec):
        vec = list(vec)
        return cls(vec[0:3], vec[3:6], vec[6:8], vec[8:11])

    def vector(self):
        return (*self.cA, *self.cB, *self.cC, *self.cD)

    def labelled(self):
        labels = ([f"C1[{l}]" for l in range(3)] + [f"C2[{l}]" for l in range(3)]
                  + [f"C3[{l}]" for l in (1, 2)] + [f"C4[{l}]" for l in (1, 2, 3)])
        return dict(zip(labels, self.vector()))

    def is_strong(self):
        return not any(self.cC) and not any(self.cD)

    def lines(self, nonzero_only=True):
        return [f"{k}={v}" for k, v in self.labelled().items() if v or not nonzero_only]

    def __str__(self):
        return " ".join(self.lines()) or "0"


# -- exact linear algebra ----------------------------------------------------

def _rref(rows):
    """Reduced row echelon form over Fractions; returns (matrix, pivot columns)."""
    m = [list(r) for r in rows]
    n_rows = len(m)
    n_cols = len(m[0]) if m else 0
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        m[r] = [x / p for x in m[r]]
        for i in range(n_rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return m, pivots


def rank(rows):
    return len(_rref(rows)[1])


class Classifier:
    """Exact change of basis from tensors to :class:`Decomposition` coefficients.

    ``basis`` is the 18x11 matrix whose columns are the vectorised basis
    tensors. A left inverse is computed once by Gauss-Jordan elimination of
    the normal equations; every answer is checked by re-synthesis.
    """

    def __init__(self, basis):
        self.basis = [[_frac(x) for x in row] for row in basis]
        if len(self.basis) != 18 or any(len(row) != 11 for row in self.basis):
            raise ValueError("basis matrix must be 18x11")
        cols = list(zip(*self.basis))
        gram = [[sum(a * b for a, b in zip(ci, cj)) for cj in cols] for ci in cols]
        aug = [row + [Fraction(int(i == j)) for j in range(11)] for i, row in enumerate(gram)]
        red, pivots = _rref(aug)
        if pivots[:11] != list(range(11)):
            raise SingularBasis("basis tensors are linearly dependent")
        gram_inv = [row[11:] for row in red]
        # left inverse P = (B^T B)^{-1} B^T, an 11x18 matrix
        self.left_inverse = [
            [sum(gram_inv[i][l] * cols[l][r] for l in range(11)) for r in range(18)]
            for i in range(11)
        ]

    @classmethod
    def default(cls):
        return cls(_basis_matrix())

    def synthesize(self, d):
        c = d.vector()
        return CoefficientTensor(tuple(sum(row[j] * c[j] for j in range(11)) for row in self.basis))

    def classify(self, g):
        if not check_null(g):
            raise NotNull("tensor does not satisfy the null condition", full_symbol(g).nonzero())
        vec = g.entries
        coeffs = [sum(p * x for p, x in zip(row, vec)) for row in self.left_inverse]
        d = Decomposition.from_vector(coeffs)
        if self.synthesize(d) != g:
            raise NotNull("tensor is not in the span of the basis forms")
        return d


def _basis_matrix():
    cols = [basis_tensor(name).entries for name in BASIS_FORMS]
    return [[cols[j][r] for j in range(11)] for r in range(18)]


@lru_cache(maxsize=1)
def _default_classifier():
    return Classifier.default()


def classify(g):
    """Coefficients of ``g`` over the null-form basis; raises :class:`NotNull`."""
    return _default_classifier().classify(g)


def synthesize(d):
    out = CoefficientTensor.zero()
    for name, c in zip(BASIS_FORMS, d.vector()):
        if c:
            out = out + c * basis_tensor(name)
    return out


def evaluate_nonlinearity(g, du, d2u):
    """``sum g^{kij} du_k d2u_ij`` in floating point.

    ``du`` has shape ``(3, ...)`` and ``d2u`` shape ``(3, 3, ...)`` (symmetric
    in its first two axes); trailing axes broadcast.
    """
    du = np.asarray(du, dtype=float)
    d2u = np.asarray(d2u, dtype=float)
    return np.einsum("kij,k...,ij...->...", g.array, du, d2u)


# -- text formats ------------------------------------------------------------

_ENTRY_RE = re.compile(r"^g\s*\[\s*(\d)\s*\]\s*\[\s*(\d)\s*\]\s*\[\s*(\d)\s*\]\s*=\s*(.+)$")
_DECOMP_RE = re.compile(r"^C([1-4])\s*\[\s*(\d)\s*\]\s*=\s*(.+)$")


def _parse_value(text, lineno):
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"not a rational number: {text.strip()!r}", lineno) from None


def parse_tensor(text):
    """Parse lines ``g[k][i][j] = p/q``; ``#`` starts a comment.

    A single line holding a preset name (e.g. ``FA0``) is also accepted.
    """
    entries = {}
    seen = {}
    lines = [(n, raw.split("#", 1)[0].strip()) for n, raw in enumerate(text.splitlines(), 1)]
    lines = [(n, s) for n, s in lines if s]
    if len(lines) == 1 and lines[0][1] in PRESETS:
        return preset(lines[0][1])
    for lineno, line in lines:
        m = _ENTRY_RE.match(line)
        if not m:
            raise ParseError(f"expected 'g[k][i][j] = p/q', got {line!r}", lineno)
        k, i, j = (int(x) for x in m.groups()[:3])
        if max(k, i, j) > 2:
            raise ParseError(f"index out of range in {line!r}", lineno)
        value = _parse_value(m.group(4), lineno)
        key = _slot(k, i, j)
        if key in entries and entries[key] != value:
            raise ParseError(
                f"g[{k}][{i}][{j}] = {value} conflicts with line {seen[key]}", lineno)
        entries[key] = value
        seen[key] = lineno
    out = [Fraction(0)] * 18
    for key, value in entries.items():
        out[key] = value
    return CoefficientTensor(tuple(out))


def format_tensor(g):
    return "".join(f"g[{k}][{i}][{j}] = {v}\n" for (k, i, j), v in g.items())


def parse_decomposition(text):
    vec = [Fraction(0)] * 11
    offsets = {1: (0, 0), 2: (3, 0), 3: (6, 1), 4: (8, 1)}
    sizes = {1: 3, 2: 3, 3: 2, 4: 3}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for item in line.split():
            m = _DECOMP_RE.match(item) if "=" in item and not item.endswith("=") else None
            if m is None:
                raise ParseError(f"expected 'Cm[l]=value', got {item!r}", lineno)
            group, l = int(m.group(1)), int(m.group(2))
            start, base = offsets[group]
            if not 0 <= l - base < sizes[group]:
                raise ParseError(f"index {l} out of range for C{group}", lineno)
            vec[start + l - base] = _parse_value(m.group(3), lineno)
    return Decomposition.from_vector(vec)


# the CLM preset is d_t(|d_t u|^2 - |grad u|^2) written as A_l d_l(N_ij d_i u d_j u)
_CLM = SemilinearTensor(N=((1, 0, 0), (0, -1, 0), (0, 0, -1)), A=(1, 0, 0))

PRESETS = dict(_FORMS)
PRESETS["CLM"] = _CLM.to_tensor()


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownForm(f"unknown preset {name!r}") from None


def direct_symbols(g, theta):
    """Float values of ``g^{kij} w_k w_i w_j`` and ``(g^{1ij} w_2 - g^{2ij} w_1) w_i w_j``
    contracted directly from the tensor entries (no trigonometric reduction)."""
    theta = np.asarray(theta, dtype=float)
    w = np.stack([-np.ones_like(theta), np.cos(theta), np.sin(theta)])
    a = g.array
    full = np.einsum("kij,k...,i...,j...->...", a, w, w, w)
    quad1 = np.einsum("ij,i...,j...->...", a[1], w, w)
    quad2 = np.einsum("ij,i...,j...->...", a[2], w, w)
    return full, quad1 * w[2] - quad2 * w[1]


def check_null_sampled(g, points=64, tol=1e-12):
    theta = 2 * math.pi * np.arange(points) / points
    full, _ = direct_symbols(g, theta)
    return bool(np.max(np.abs(full)) <= tol)


def check_strong_null_sampled(g, points=64, tol=1e-12):
    theta = 2 * math.pi * np.arange(points) / points
    full, tang = direct_symbols(g, theta)
    return bool(max(np.max(np.abs(full)), np.max(np.abs(tang))) <= tol)
