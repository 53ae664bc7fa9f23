from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lattice_wkb.eikonal import (EikonalError, eikonal_residual, glue_phase, radial_cutoff, residual_report,
                                 smooth_step, solve_eikonal)
from lattice_wkb.model import anisotropic_model, isotropic_model, normal_form, reference_model, variable_hop_model
from lattice_wkb.polynomial import Polynomial

x = Polynomial.variable(1, 0)
PHI6 = x * x * Fraction(1, 2) - x ** 4 * Fraction(1, 96) + x ** 6 * Fraction(1, 1280)


def test_reference_jet_through_degree_six():
    sol = solve_eikonal(reference_model(), 4)
    assert sol.jet == PHI6
    assert sol.pieces[1].is_zero() and sol.pieces[3].is_zero()


def test_phi0_of_transformed_anisotropic_model():
    _, tm = normal_form(anisotropic_model())
    sol = solve_eikonal(tm, 0)
    y1, y2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    assert sol.pieces[0] == y1 * y1 * Fraction(1, 2) + y2 * y2


def test_residual_examples():
    m = reference_model()
    r = eikonal_residual(m, PHI6, 8)
    assert r.truncate_degree(7).is_zero()
    assert not r.homogeneous_part(8).is_zero()
    assert eikonal_residual(m, x * x * Fraction(1, 2), 2).is_zero()
    assert eikonal_residual(m, Polynomial(1), 2) == x * x


@pytest.mark.parametrize("builder", [reference_model, isotropic_model, variable_hop_model])
def test_residual_vanishes_through_jet(builder):
    _, tm = normal_form(builder())
    sol = solve_eikonal(tm, 6)
    assert eikonal_residual(tm, sol.jet, sol.jet_degree).is_zero()
    assert all(v == 0 for v in residual_report(tm, sol).values())


def test_transformed_anisotropic_residual():
    _, tm = normal_form(anisotropic_model())
    sol = solve_eikonal(tm, 4)
    assert eikonal_residual(tm, sol.jet, sol.jet_degree).is_zero()


def test_even_model_has_no_odd_pieces():
    sol = solve_eikonal(variable_hop_model(), 7)
    assert all(sol.pieces[k].is_zero() for k in (1, 3, 5, 7))


def test_no_low_degree_correction():
    sol = solve_eikonal(reference_model(), 6)
    assert (sol.jet - sol.pieces[0]).low_degree() >= 3


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.fractions(min_value=-3, max_value=3).filter(lambda f: f != 0))
def test_perturbing_a_piece_breaks_the_residual(k, delta):
    m = reference_model()
    sol = solve_eikonal(m, 4)
    bumped = sol.jet + x ** (k + 2) * delta
    r = eikonal_residual(m, bumped, k + 2)
    assert not r.homogeneous_part(k + 2).is_zero()


def test_smooth_cutoff_shape():
    assert smooth_step(0.0) == 0 and smooth_step(1.0) == 1
    t = np.linspace(0, 1, 50)
    assert np.all(np.diff(smooth_step(t)) >= 0)
    chi = radial_cutoff(np.array([[0.3], [0.75], [1.2]]), 0.5, 1.0)
    assert chi[0] == 1 and 0 < chi[1] < 1 and chi[2] == 0


def test_glued_phase_examples():
    sol = solve_eikonal(reference_model(), 4)
    g = glue_phase(sol, 0.5, 1.0, 0.3)
    assert g.scalar(0.25) == pytest.approx(float(PHI6([Fraction(1, 4)])), abs=1e-15)
    assert g.scalar(2.0) == pytest.approx(0.6)
    assert g.scalar(0.0) == 0
    assert g.report["positive"]


def test_default_slope_keeps_phase_positive():
    sol = solve_eikonal(reference_model(), 11)
    g = glue_phase(sol, 1.2, 1.45)
    assert g.report["positive"] and g.report["monotone_on_rays"]


def test_glue_rejects_bad_radii():
    sol = solve_eikonal(reference_model(), 2)
    with pytest.raises(EikonalError):
        glue_phase(sol, 1.0, 0.5, 0.3)
    with pytest.raises(EikonalError):
        glue_phase(sol, 0.5, 1.0, -1.0)
