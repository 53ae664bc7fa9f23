import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lattice_wkb.conjugation import (ConjugationError, conjugate_expand, g0_closed_form, gk_apply, gk_as_diffop,
                                     structure_report)
from lattice_wkb.eikonal import EikonalSolution, solve_eikonal
from lattice_wkb.model import isotropic_model, reference_model, variable_hop_model
from lattice_wkb.polynomial import FLOAT, DiffOperator, Polynomial, monomials_up_to

y = Polynomial.variable(1, 0)
one = Polynomial.constant(1, 1)


@pytest.fixture(scope="module")
def ref():
    m = reference_model()
    return conjugate_expand(m, solve_eikonal(m, 8), 3, D=12)


@pytest.fixture(scope="module")
def vhop():
    m = variable_hop_model()
    return conjugate_expand(m, solve_eikonal(m, 8), 2, D=10)


def test_gk_apply_examples(ref):
    assert gk_apply(ref, 0, y) == y * 3
    assert gk_apply(ref, 0, one) == one
    assert gk_apply(ref, Fraction(1, 2), y * y).is_zero()


def test_g0_diffop_and_closed_form(ref):
    expected = DiffOperator(1, {(0,): one, (1,): y * 2, (2,): -one})
    assert gk_as_diffop(ref, 0) == expected
    assert g0_closed_form(ref) == expected


def test_g_half_vanishes(ref):
    assert gk_as_diffop(ref, Fraction(1, 2)).coeffs == {}


def test_g1_on_constant(ref):
    p = gk_apply(ref, 1, one)
    assert p.degree() <= 2 and p.parity() == "even"
    assert p == y * y * Fraction(3, 8) - Fraction(1, 4)


def test_g1_operator(ref):
    op = gk_as_diffop(ref, 1)
    assert op.coeffs == {
        (0,): y * y * Fraction(3, 8) - Fraction(1, 4),
        (1,): y ** 3 * Fraction(1, 4) - y,
        (2,): Fraction(1, 2) - y * y * Fraction(1, 2),
        (3,): y * Fraction(1, 3),
        (4,): Polynomial.constant(1, Fraction(-1, 12)),
    }


@pytest.mark.parametrize("k", [0, Fraction(1, 2), 1, Fraction(3, 2), 2])
def test_structure_pattern(ref, vhop, k):
    assert structure_report(ref, k)["ok"]
    assert structure_report(vhop, k)["ok"]


def test_variable_hop_g0_matches_closed_form(vhop):
    assert gk_as_diffop(vhop, 0) == g0_closed_form(vhop)


@pytest.mark.parametrize("fixture", ["ref", "vhop"])
def test_negative_orders_cancel(request, fixture):
    ex = request.getfixturevalue(fixture)
    for beta in monomials_up_to(1, ex.D):
        assert all(p.is_zero() for p in ex.negative_orders(beta).values())


def test_unbalanced_model_leaves_negative_orders():
    m = reference_model()
    m.hops[(0,)] = [Polynomial.constant(1, 3)]
    ex = conjugate_expand(m, solve_eikonal(reference_model(), 4), 1, D=6)
    with pytest.raises(ConjugationError, match="degree"):
        ex.column((0,))


def test_wrong_harmonic_phase_spoils_g0():
    m = reference_model()
    sol = solve_eikonal(m, 4)
    bad = EikonalSolution(sol.lam, [sol.pieces[0] * 2, *sol.pieces[1:]], sol.ctx)
    assert gk_apply(conjugate_expand(m, bad, 1, D=6), 0, one).degree() == 2


def test_short_jet_rejected():
    m = reference_model()
    with pytest.raises(ConjugationError):
        conjugate_expand(m, solve_eikonal(m, 1), 2)


def test_validity_degree_enforced(ref):
    with pytest.raises(ValueError):
        gk_apply(ref, 1, y ** 11)


def test_two_dimensional_g0_is_harmonic():
    m = isotropic_model()
    ex = conjugate_expand(m, solve_eikonal(m, 4), 1, D=6)
    y1, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    assert gk_apply(ex, 0, y1 * y2) == y1 * y2 * 6
    assert gk_apply(ex, 0, Polynomial.constant(2, 1)) == Polynomial.constant(2, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(0, 4))
def test_degree_and_parity_of_columns(vhop, b, k2):
    image = vhop.apply2(k2, y ** b)
    if image.is_zero():
        return
    assert image.degree() <= b + k2
    assert image.parity() == ("even" if (b + k2) % 2 == 0 else "odd")


def test_float_mode_agrees_with_exact(vhop):
    m = variable_hop_model()
    fl = conjugate_expand(m.to_float(), solve_eikonal(m.to_float(), 8, FLOAT), 2, D=10)
    for k2 in range(5):
        for b in range(5):
            assert fl.apply2(k2, y ** b).allclose(vhop.apply2(k2, y ** b).to_float(), 1e-10)


def conjugated_numeric(model, phi, u, eps, ys):
    """``(1/eps) e^{phi/eps} H (e^{-phi/eps} u(./sqrt(eps)))`` at ``x = sqrt(eps) y``."""
    s = math.sqrt(eps)
    out = []
    for yy in ys:
        x = s * yy
        total = sum(eps ** l * float(V([x])) for l, V in enumerate(model.potential)) * u(yy)
        for eta, orders in model.hops.items():
            a = sum(eps ** k * float(p([x])) for k, p in enumerate(orders))
            xs = x + eps * eta[0]
            total += a * math.exp(-(phi(xs) - phi(x)) / eps) * u(xs / s)
        out.append(total / eps)
    return np.array(out)


@pytest.mark.parametrize("N", [1, 2])
def test_truncation_error_scaling(N):
    m = variable_hop_model()
    sol = solve_eikonal(m, 12)
    ex = conjugate_expand(m, sol, N, D=8)
    phi_poly = sol.jet.to_float()
    phi = lambda x: phi_poly([x])  # noqa: E731
    u_poly = y * y - y * Fraction(1, 3)
    u = lambda t: float(u_poly([t]))  # noqa: E731
    terms = [ex.apply2(k2, u_poly).to_float() for k2 in range(2 * N + 1)]
    ys = np.linspace(-1, 1, 7)
    grid = [0.02, 0.01, 0.005]
    errs = []
    for eps in grid:
        series = sum(eps ** (k2 / 2) * np.array([t([v]) for v in ys]) for k2, t in enumerate(terms))
        errs.append(np.max(np.abs(conjugated_numeric(m, phi, u, eps, ys) - series)))
    slope = np.polyfit(np.log(grid), np.log(errs), 1)[0]
    assert slope >= N + 0.5 - 0.1
