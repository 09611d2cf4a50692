"""Exact algebra: symbols, relations, parametrization and classification."""

import random
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from nullwave import algebra
from nullwave.algebra import (BASIS_FORMS, FORM_NAMES, PRESETS, Classifier, CoefficientTensor,
                              Decomposition, ParameterVector, SemilinearTensor, basis_tensor,
                              check_clm_null, check_null, check_null_relations,
                              check_null_sampled, check_strong_null,
                              check_strong_null_relations, check_strong_null_sampled,
                              classify, cone_symbol, evaluate_nonlinearity, full_symbol,
                              parametrize, parse_decomposition, parse_tensor, preset, synthesize,
                              synthesize_from_parameters, tangency_symbol)
from nullwave.errors import NotNull, ParseError, SingularBasis, UnknownForm

fractions = st.fractions(min_value=-20, max_value=20, max_denominator=12)


def tensor_of(**entries):
    return CoefficientTensor.from_dict({tuple(int(c) for c in k[1:]): v for k, v in entries.items()})


def random_fraction(rng):
    return Fraction(rng.randint(-30, 30), rng.randint(1, 12))


def random_tensor(rng):
    return CoefficientTensor(tuple(random_fraction(rng) for _ in range(18)))


def random_decomposition(rng):
    return Decomposition.from_vector([random_fraction(rng) for _ in range(11)])


# -- sympy oracle ------------------------------------------------------------------

_z = sp.symbols("z")


def sympy_symbol_coefficients(g, which="full"):
    """Fourier coefficients of the symbol computed independently with sympy."""
    c = (_z + 1 / _z) / 2
    s = (_z - 1 / _z) / (2 * sp.I)
    w = (-1, c, s)
    expr = 0
    for k in range(3):
        for i in range(3):
            for j in range(3):
                val = sp.Rational(g[k, i, j].numerator, g[k, i, j].denominator)
                if val == 0:
                    continue
                if which == "full":
                    expr += val * w[k] * w[i] * w[j]
                elif k == 1:
                    expr += -s * val * w[i] * w[j]
                elif k == 2:
                    expr += c * val * w[i] * w[j]
    poly = sp.expand(expr * _z ** 3)
    coeff = {n - 3: sp.nsimplify(poly.coeff(_z, n)) for n in range(7)}
    out = {"1": coeff[0]}
    for n in (1, 2, 3):
        out[f"cos{n}"] = sp.nsimplify(coeff[n] + coeff[-n])
        out[f"sin{n}"] = sp.nsimplify(sp.I * (coeff[n] - coeff[-n]))
    return {k: Fraction(int(sp.numer(v)), int(sp.denom(v))) for k, v in out.items()}


@pytest.mark.parametrize("name", FORM_NAMES + ("CLM",))
def test_symbols_match_sympy_on_presets(name):
    g = preset(name)
    assert full_symbol(g).labelled() == sympy_symbol_coefficients(g, "full")
    assert tangency_symbol(g).labelled() == sympy_symbol_coefficients(g, "tangency")


def test_symbols_match_sympy_on_random_tensors():
    rng = random.Random(7)
    for _ in range(25):
        g = random_tensor(rng)
        assert full_symbol(g).labelled() == sympy_symbol_coefficients(g, "full")
        assert tangency_symbol(g).labelled() == sympy_symbol_coefficients(g, "tangency")


# -- worked examples ----------------------------------------------------------------

def test_cone_symbol_examples():
    p = cone_symbol(tensor_of(g112=1), 1)
    assert p.labelled() == {"1": 0, "cos1": 0, "cos2": 0, "cos3": 0,
                            "sin1": 0, "sin2": 1, "sin3": 0}
    assert cone_symbol(CoefficientTensor.zero(), 2).is_zero()
    assert cone_symbol(basis_tensor("FB0"), 0).is_zero()


def test_full_symbol_examples():
    assert full_symbol(basis_tensor("FA0")).is_zero()
    assert full_symbol(basis_tensor("FC1")).is_zero()
    p = full_symbol(tensor_of(g000=1))
    assert p.nonzero() == {"1": -1}


def test_tangency_symbol_examples():
    assert tangency_symbol(basis_tensor("FA1")).is_zero()
    assert tangency_symbol(CoefficientTensor.zero()).is_zero()
    assert tangency_symbol(basis_tensor("FC2")).c0 == 1


def test_basis_tensor_entries():
    fa0 = basis_tensor("FA0")
    assert dict(fa0.items()) == {(0, 0, 0): 2, (1, 0, 1): -1, (2, 0, 2): -1}
    assert dict(basis_tensor("FB0").items()) == {(0, 0, 0): 1, (0, 1, 1): -1, (0, 2, 2): -1}
    fc1 = basis_tensor("FC1")
    assert dict(fc1.items()) == {(0, 1, 2): Fraction(1, 2), (1, 0, 2): Fraction(-1, 2)}
    assert fc1[0, 2, 1] == Fraction(1, 2)
    assert basis_tensor("GC2") == basis_tensor("FC1")
    with pytest.raises(UnknownForm):
        basis_tensor("FE0")


def test_contractions_reproduce_named_forms():
    # F^A_i = d_i(|u_t|^2 - |grad u|^2) and F^B_i = d_i u box u on a random jet
    rng = np.random.default_rng(3)
    du = rng.normal(size=3)
    H = rng.normal(size=(3, 3))
    H = H + H.T
    box = H[0, 0] - H[1, 1] - H[2, 2]
    for i in range(3):
        fa = 2 * (du[0] * H[i, 0] - du[1] * H[i, 1] - du[2] * H[i, 2])
        assert evaluate_nonlinearity(basis_tensor(f"FA{i}"), du, H) == pytest.approx(fa)
        assert evaluate_nonlinearity(basis_tensor(f"FB{i}"), du, H) == pytest.approx(du[i] * box)
    fc1 = du[0] * H[1, 2] - du[1] * H[0, 2]
    assert evaluate_nonlinearity(basis_tensor("FC1"), du, H) == pytest.approx(fc1)


def test_evaluate_nonlinearity_examples():
    assert evaluate_nonlinearity(CoefficientTensor.zero(), [1, 2, 3], np.eye(3)) == 0
    d2u = np.zeros((3, 3))
    d2u[0, 0] = 1
    assert evaluate_nonlinearity(basis_tensor("FA0"), [1, 0, 0], d2u) == 2
    d2u = np.diag([2.0, 1.0, 1.0])
    assert evaluate_nonlinearity(basis_tensor("FB0"), [1, 0, 0], d2u) == 0


def test_evaluate_nonlinearity_broadcasts():
    du = np.ones((3, 4, 5))
    d2u = np.ones((3, 3, 4, 5))
    out = evaluate_nonlinearity(basis_tensor("FA0"), du, d2u)
    assert out.shape == (4, 5)


# -- checkers -----------------------------------------------------------------------

@pytest.mark.parametrize("name", BASIS_FORMS)
def test_basis_forms_are_null(name):
    g = basis_tensor(name)
    assert check_null(g) and check_null_relations(g) and check_null_sampled(g)


def test_non_null_single_entry():
    g = tensor_of(g000=1)
    assert not check_null(g)
    assert not check_null_relations(g)
    assert not check_null_sampled(g)
    assert algebra.null_defect(g) == 1


@pytest.mark.parametrize("name", ["FA0", "FA1", "FA2", "FB0", "FB1", "FB2"])
def test_strong_forms(name):
    assert check_strong_null(basis_tensor(name))


@pytest.mark.parametrize("name", ["FC1", "FC2", "FD1", "FD2", "FD3"])
def test_weak_forms(name):
    g = basis_tensor(name)
    assert check_null(g)
    assert not check_strong_null(g)
    assert not check_strong_null_relations(g)


def test_zero_is_strong_null():
    assert check_strong_null(CoefficientTensor.zero())


def test_checker_routes_agree_on_random_tensors():
    rng = random.Random(11)
    for _ in range(300):
        g = random_tensor(rng)
        assert check_null(g) == check_null_relations(g) == check_null_sampled(g)
        assert check_strong_null(g) == check_strong_null_relations(g) == check_strong_null_sampled(g)
        if check_strong_null(g):
            assert check_null(g)


def test_clm_examples():
    assert check_clm_null(SemilinearTensor(N=((1, 0, 0), (0, -1, 0), (0, 0, -1))))
    assert check_clm_null(SemilinearTensor(N=((0,) * 3,) * 3))
    assert not check_clm_null(SemilinearTensor(N=((0, 1, 0), (0, 0, 0), (0, 0, 0))))


def test_clm_preset_is_fa0():
    assert preset("CLM") == basis_tensor("FA0")


def test_clm_conditions_imply_null_tensor():
    rng = random.Random(5)
    for _ in range(50):
        a, b, c, d, e, f = (random_fraction(rng) for _ in range(6))
        N = ((-e, a, b), (-a, e, c), (-b, -c, e))
        A = tuple(random_fraction(rng) for _ in range(3))
        s = SemilinearTensor(N=N, A=A)
        assert check_clm_null(s)
        assert check_null(s.to_tensor())


# -- parametrization ----------------------------------------------------------------

def test_parametrize_examples():
    v = parametrize(basis_tensor("FA0"))
    assert v[1] == 2 and all(v[j] == 0 for j in range(2, 12))
    assert all(x == 0 for x in parametrize(CoefficientTensor.zero()).a)


def test_parametrize_rejects_non_null():
    with pytest.raises(NotNull) as info:
        parametrize(tensor_of(g000=1))
    assert info.value.coefficients == {"1": -1}


@settings(max_examples=200, deadline=None)
@given(st.lists(fractions, min_size=11, max_size=11))
def test_parameter_round_trip(values):
    v = ParameterVector(values)
    g = synthesize_from_parameters(v)
    assert check_null(g)
    assert parametrize(g) == v


@pytest.mark.parametrize("name", BASIS_FORMS)
def test_parametrization_reconstructs_basis(name):
    g = basis_tensor(name)
    assert synthesize_from_parameters(parametrize(g)) == g


# -- classification -----------------------------------------------------------------

def test_basis_rank_and_kernel():
    basis = algebra._basis_matrix()
    assert algebra.rank(basis) == 11
    # every basis column satisfies the seven relations, and 18 - 7 = 11
    rows = []
    for n in range(18):
        e = [0] * 18
        e[n] = 1
        rows.append([r for r in algebra.null_relations(CoefficientTensor(tuple(e)))])
    relation_matrix = [list(col) for col in zip(*rows)]
    assert algebra.rank(relation_matrix) == 7


def test_classify_examples():
    assert classify(basis_tensor("FA0")) == Decomposition(cA=(1, 0, 0))
    d = classify(basis_tensor("GC0"))
    assert d.labelled()["C1[1]"] == Fraction(1, 2)
    assert d.labelled()["C2[1]"] == -1
    assert d.labelled()["C4[2]"] == -1
    assert str(d) == "C1[1]=1/2 C2[1]=-1 C4[2]=-1"
    assert synthesize(d) == basis_tensor("GC0")


@pytest.mark.parametrize("name", [n for n in FORM_NAMES if n.startswith("G")])
def test_remark_forms_are_null_and_classifiable(name):
    g = basis_tensor(name)
    assert synthesize(classify(g)) == g


def test_synthesize_examples():
    assert synthesize(Decomposition()).is_zero()
    assert synthesize(Decomposition(cA=(1, 0, 0))) == basis_tensor("FA0")


def test_classify_rejects_non_null():
    with pytest.raises(NotNull):
        classify(tensor_of(g000=1))


@settings(max_examples=200, deadline=None)
@given(st.lists(fractions, min_size=11, max_size=11))
def test_classify_round_trip(values):
    d = Decomposition.from_vector(values)
    g = synthesize(d)
    assert check_null(g)
    assert classify(g) == d


def test_strong_null_has_no_weak_part():
    rng = random.Random(2)
    for _ in range(100):
        vec = [random_fraction(rng) for _ in range(6)] + [0] * 5
        g = synthesize(Decomposition.from_vector(vec))
        assert check_strong_null(g)
        assert classify(g).is_strong()


def test_singular_basis_detected():
    basis = algebra._basis_matrix()
    for row in basis:
        row[10] = row[0]
    with pytest.raises(SingularBasis):
        Classifier(basis)


def test_corrupted_basis_fails_loudly():
    basis = algebra._basis_matrix()
    basis[0][0] += 1
    clf = Classifier(basis)
    with pytest.raises(NotNull):
        clf.classify(basis_tensor("FA0"))


# -- text formats -------------------------------------------------------------------

def test_parse_tensor_round_trip():
    rng = random.Random(1)
    for _ in range(20):
        g = random_tensor(rng)
        assert parse_tensor(algebra.format_tensor(g)) == g


def test_parse_tensor_accepts_both_orders_and_presets():
    g = parse_tensor("# comment\ng[0][1][2] = 1/2\ng[0][2][1] = 1/2\n\ng[1][0][2]=-1/2\n")
    assert g == basis_tensor("FC1")
    assert parse_tensor("FA0\n") == basis_tensor("FA0")


@pytest.mark.parametrize("text, line", [
    ("g[0][0][0] = 1\ng[0][1][2] = 1\ng[0][2][1] = 2\n", 3),
    ("g[0][0][0] = x\n", 1),
    ("\n\ng[3][0][0] = 1\n", 3),
    ("h[0][0][0] = 1\n", 1),
    ("g[0][0][0] = 1/0\n", 1),
])
def test_parse_tensor_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as info:
        parse_tensor(text)
    assert info.value.lineno == line
    assert str(info.value).startswith(f"line {line}:")


def test_parse_decomposition():
    d = parse_decomposition("C1[1]=1/2 C2[1]=-1\nC4[2]=-1\n")
    assert d == classify(basis_tensor("GC0"))
    assert parse_decomposition(str(d)) == d
    with pytest.raises(ParseError):
        parse_decomposition("C3[0]=1")
    with pytest.raises(ParseError):
        parse_decomposition("C5[0]=1")


def test_tensor_validation():
    with pytest.raises(ValueError):
        CoefficientTensor((0,) * 17)
    with pytest.raises(ValueError):
        CoefficientTensor.from_dict({(0, 1, 2): 1, (0, 2, 1): 2})
    with pytest.raises(UnknownForm):
        preset("nope")


def test_float_array_is_symmetric_and_read_only():
    a = basis_tensor("FC1").array
    assert a[0, 1, 2] == a[0, 2, 1] == 0.5
    with pytest.raises(ValueError):
        a[0, 0, 0] = 1.0


def test_trig_poly_evaluation_matches_direct_contraction():
    rng = random.Random(9)
    theta = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    for _ in range(50):
        g = random_tensor(rng)
        full, tang = algebra.direct_symbols(g, theta)
        assert np.max(np.abs(full_symbol(g).evaluate(theta) - full)) < 1e-12 * max(1, np.abs(full).max())
        # the tangency symbol is the negative of (g^1 w_2 - g^2 w_1) w w
        assert np.max(np.abs(tangency_symbol(g).evaluate(theta) + tang)) < 1e-12 * max(1, np.abs(tang).max())
