from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lattice_wkb.polynomial import EXACT, FLOAT, DiffOperator, Polynomial
from lattice_wkb.serialize import poly_from_json, poly_to_json, series_from_json, series_to_json
from lattice_wkb.series import PolySeries, PuiseuxScalar, series_exp, series_inv_sqrt

y = Polynomial.variable(1, 0)
y1, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)

fractions = st.fractions(min_value=-5, max_value=5, max_denominator=7)


@st.composite
def polys(draw, d=2, max_deg=4):
    alphas = st.tuples(*[st.integers(0, max_deg)] * d)
    terms = draw(st.dictionaries(alphas, fractions, max_size=5))
    return Polynomial(d, terms)


@st.composite
def pure_polys(draw, d=2):
    p = draw(polys(d))
    parity = draw(st.sampled_from([0, 1]))
    return Polynomial(d, {a: c for a, c in p.terms.items() if sum(a) % 2 == parity})


@st.composite
def poly_series(draw, d=1, floor2=1, trunc2=5):
    coeffs = {k: draw(polys(d, 3)) for k in range(floor2, trunc2 + 1) if draw(st.booleans())}
    return PolySeries(coeffs, trunc2, d=d)


# -- polynomials ------------------------------------------------------------------

def test_poly_examples():
    assert (y * y).diff(0) == y * 2
    assert (y1 + y2) * (y1 - y2) == y1 * y1 - y2 * y2
    assert (y * y).substitute_linear([[2]]) == y * y * 4


def test_zero_terms_not_stored():
    p = (y + 1) - y
    assert p.terms == {(0,): 1}
    assert Polynomial(1).degree() == float("-inf")


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        y + y1


def test_parity_labels():
    assert (y * y + 1).parity() == "even"
    assert (y ** 3 - y).parity() == "odd"
    assert (y + 1).parity() == "mixed"
    assert Polynomial(1).parity() == "zero"


@given(polys(), polys(), polys())
def test_ring_axioms(p, q, r):
    assert (p + q) * r == p * r + q * r
    assert p * q == q * p
    assert (p * q) * r == p * (q * r)
    assert p + q - q == p


@given(pure_polys(), pure_polys())
def test_parity_of_products(p, q):
    if p.is_zero() or q.is_zero():
        return
    expected = "even" if (p.parity() == "odd") == (q.parity() == "odd") else "odd"
    assert (p * q).parity() == expected


@given(polys(), st.lists(st.lists(fractions, min_size=2, max_size=2), min_size=2, max_size=2),
       st.lists(fractions, min_size=2, max_size=2))
def test_substitute_linear_matches_evaluation(p, M, x):
    Mx = [M[0][0] * x[0] + M[0][1] * x[1], M[1][0] * x[0] + M[1][1] * x[1]]
    assert p.substitute_linear(M)(x) == p(Mx)


def test_float_context_tolerance():
    assert FLOAT.is_zero(1e-12)
    assert not FLOAT.is_zero(1e-8)
    assert not EXACT.is_zero(Fraction(1, 10 ** 30))


# -- differential operators ---------------------------------------------------------

def test_diffop_examples():
    D = DiffOperator(1, {(0,): Polynomial.constant(1, 1), (1,): y * 2, (2,): Polynomial.constant(1, -1)})
    assert D.apply(Polynomial.constant(1, 1)) == Polynomial.constant(1, 1)
    assert D.apply(y) == y * 3
    assert DiffOperator(1, {(2,): Polynomial.constant(1, 1)}).apply(y).is_zero()


# -- series -----------------------------------------------------------------------

def test_series_exp_examples():
    e = series_exp(PolySeries({1: y}, 2, d=1))
    assert e == PolySeries({0: Polynomial.constant(1, 1), 1: y, 2: y * y * Fraction(1, 2)}, 2, d=1)
    assert series_exp(PolySeries({}, 4, d=1)) == PolySeries({0: Polynomial.constant(1, 1)}, 4, d=1)
    w = series_exp(PolySeries({2: y ** 4 * Fraction(1, 48)}, 3, d=1))
    assert w == PolySeries({0: Polynomial.constant(1, 1), 2: y ** 4 * Fraction(1, 48)}, 3, d=1)


def test_series_exp_rejects_nonvanishing_exponent():
    with pytest.raises(ValueError):
        series_exp(PolySeries({0: y}, 2, d=1))


def test_inv_sqrt_examples():
    assert series_inv_sqrt(PuiseuxScalar({0: 1, 2: 1}, 4)) == \
        PuiseuxScalar({0: 1, 2: Fraction(-1, 2), 4: Fraction(3, 8)}, 4)
    assert series_inv_sqrt(PuiseuxScalar({0: 1}, 4)) == PuiseuxScalar({0: 1}, 4)
    assert series_inv_sqrt(PuiseuxScalar({0: 1, 2: Fraction(1, 64)}, 4)) == \
        PuiseuxScalar({0: 1, 2: Fraction(-1, 128), 4: Fraction(3, 32768)}, 4)


def test_inv_sqrt_rejections():
    with pytest.raises(ValueError):
        series_inv_sqrt(PuiseuxScalar({0: -1}, 2))
    with pytest.raises(ValueError):
        series_inv_sqrt(PuiseuxScalar({0: 2, 1: 1}, 2))


def test_product_truncation_rule():
    a = PuiseuxScalar({0: 1, 1: 2}, 3)
    b = PuiseuxScalar({2: 1}, 6)
    # min(N_a + c_b, N_b + c_a) = min(3 + 2, 6 + 0)
    assert (a * b).trunc2 == 5


def test_truncated_coefficient_is_unknown():
    s = PuiseuxScalar({0: 1}, 2)
    with pytest.raises(KeyError):
        s[3]


@settings(max_examples=40)
@given(poly_series())
def test_exp_times_exp_of_negative(S):
    one = PolySeries({0: Polynomial.constant(1, 1)}, S.trunc2, d=1)
    assert (series_exp(S) * series_exp(-S)).equals_through(one, S.trunc2)


@given(st.dictionaries(st.integers(1, 6), fractions, max_size=4))
def test_inv_sqrt_squared(coeffs):
    S = PuiseuxScalar({0: 1, **coeffs}, 6)
    T = series_inv_sqrt(S)
    assert (T * T * S).equals_through(PuiseuxScalar({0: 1}, 6), 6)


@given(poly_series(trunc2=6), poly_series(trunc2=6), st.integers(1, 5))
def test_truncation_soundness(a, b, t):
    assert (a * b).truncate(t) == (a.truncate(t) * b.truncate(t)).truncate(t)
    assert (a + b).truncate(t) == a.truncate(t) + b.truncate(t)


# -- serialization -----------------------------------------------------------------

def test_poly_json_records():
    p = y ** 4 * Fraction(-1, 96)
    assert poly_to_json(p) == [{"alpha": [4], "num": "-1", "den": "96"}]
    assert poly_to_json(y.to_float() * 0.5) == [{"alpha": [1], "val": 0.5}]


@given(polys())
def test_poly_round_trip(p):
    assert poly_from_json(poly_to_json(p), 2) == p


@given(poly_series(d=1))
def test_series_round_trip(s):
    rec = series_to_json(s)
    assert rec["trunc2"] == s.trunc2
    assert series_from_json(rec, 1) == s
