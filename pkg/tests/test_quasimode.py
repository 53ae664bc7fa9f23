import math
from fractions import Fraction

import numpy as np
import pytest

from lattice_wkb.eikonal import glue_phase
from lattice_wkb.model import (LatticeModel, anisotropic_model, laplacian_model, normal_form, reference_model,
                               variable_hop_model)
from lattice_wkb.pipeline import build_pipeline, level_branches, normalized_psi
from lattice_wkb.polynomial import Polynomial
from lattice_wkb.quasimode import (LatticeBox, VerificationError, assemble_hamiltonian, assemble_quasimode,
                                   gaussian_mass, gram_report, interior_mask, reference_spectrum, residual_report,
                                   scaling_fit, to_x_variables)
from lattice_wkb.series import PolySeries

y = Polynomial.variable(1, 0)
one = Polynomial.constant(1, 1)


def free_laplacian():
    return laplacian_model(1, potential=Polynomial(1))


# -- change of variables ------------------------------------------------------------

def test_to_x_examples():
    q = to_x_variables(PolySeries({0: one}, 4, d=1))
    assert q.orders() == [0] and q.uhat(0) == one
    q = to_x_variables(PolySeries({1: y * 5}, 4, d=1))
    assert q.orders() == [0] and q.uhat(0) == y * 5


def test_ground_branch_has_integer_orders(ref_pipe):
    br = level_branches(ref_pipe, ref_pipe.level(index=0), 4)[1][0]
    q = to_x_variables(br.psi, ref_pipe.level(index=0))
    assert q.half_integer_orders() == [] and q.floor2 == 0


def test_low_degree_invariant(ref_pipe):
    lev = ref_pipe.level(index=2)
    q = to_x_variables(level_branches(ref_pipe, lev, 6)[1][0].psi, lev)
    assert q.floor2 == -2
    for l2 in q.orders():
        assert q.uhat(l2).low_degree() >= max(-l2, 0)


def test_corrupted_series_rejected(ref_pipe):
    # y^4 at order 0 sits below the floor allowed for the E = 1 level
    with pytest.raises(VerificationError):
        to_x_variables(PolySeries({0: y ** 4}, 2, d=1), ref_pipe.level(index=0))


# -- lattice matrix and spectrum ---------------------------------------------------------

def test_three_site_laplacian():
    H = assemble_hamiltonian(free_laplacian(), 1.0, LatticeBox(1, 1.0, 1.0))
    assert np.array_equal(H.toarray(), [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])
    w = reference_spectrum(H, 3)
    assert w == pytest.approx([2 - math.sqrt(2), 2, 2 + math.sqrt(2)])


def test_box_site_count_and_offset():
    box = LatticeBox(2, 0.1, 1.0)
    assert box.shape == (21, 21)
    off = LatticeBox(1, 0.1, 1.0, (0.05,))
    assert off.size == 20 and off.points()[0, 0] == pytest.approx(-0.95)


def test_interior_rows_sum_to_zero():
    H = assemble_hamiltonian(variable_hop_model(), 0.05, LatticeBox(1, 0.05, 1.0))
    kinetic = H - assemble_hamiltonian(LatticeModel(1, {(0,): [Polynomial(1)]}, [y * y]), 0.05,
                                       LatticeBox(1, 0.05, 1.0))
    rows = np.asarray(kinetic.sum(axis=1)).ravel()
    # row sums are O(eps^2) from the second-order on-site term, and exact zero for constant hops
    assert np.max(np.abs(rows[1:-1])) < 0.05 ** 2
    K = assemble_hamiltonian(free_laplacian(), 0.05, LatticeBox(1, 0.05, 1.0))
    assert np.all(np.asarray(K.sum(axis=1)).ravel()[1:-1] == 0)


def test_symmetric_for_reversible_models():
    H = assemble_hamiltonian(variable_hop_model(), 0.05, LatticeBox(1, 0.05, 1.0))
    assert abs(H - H.T).max() < 1e-12


def test_asymmetry_rejected():
    m = variable_hop_model()
    m.hops[(1,)][1] = y * Fraction(1, 2)
    with pytest.raises(VerificationError):
        assemble_hamiltonian(m, 0.1, LatticeBox(1, 0.1, 1.0))


def test_transformed_model_rejected():
    _, tm = normal_form(anisotropic_model())
    with pytest.raises(VerificationError):
        assemble_hamiltonian(tm, 0.1, LatticeBox(2, 0.1, 0.5))


def test_reference_lowest_eigenvalue():
    eps = 0.01
    w = reference_spectrum(assemble_hamiltonian(reference_model(), eps, LatticeBox(1, eps, 1.0)), 1)
    assert w[0] / eps == pytest.approx(1 - eps / 16, abs=eps ** 2)


def test_constant_shift():
    box = LatticeBox(1, 0.05, 1.0)
    base = reference_spectrum(assemble_hamiltonian(reference_model(), 0.05, box), 4)
    shifted = laplacian_model(1, potential=y * y + Fraction(3, 10))
    assert reference_spectrum(assemble_hamiltonian(shifted, 0.05, box), 4) == pytest.approx(base + 0.3)


def test_two_dimensional_solvers_agree():
    box = LatticeBox(2, 0.05, 1.2)
    H = assemble_hamiltonian(anisotropic_model(), 0.05, box)
    assert box.size > 1500
    sparse = reference_spectrum(H, 4, d=2)
    dense = reference_spectrum(H, 4, d=2, dense_below=10 ** 9)
    assert sparse == pytest.approx(dense, rel=1e-10)


def test_solver_caps():
    H = assemble_hamiltonian(reference_model(), 0.01, LatticeBox(1, 0.01, 1.0))
    with pytest.raises(VerificationError):
        reference_spectrum(H, 1, banded_cap=100)


# -- residuals, fits, Gram matrices --------------------------------------------------------

def test_residual_of_exact_eigenpair():
    H = assemble_hamiltonian(free_laplacian(), 1.0, LatticeBox(1, 1.0, 1.0))
    v = np.array([1.0, math.sqrt(2), 1.0])
    assert residual_report(H, v, 2 - math.sqrt(2))["r_global"] < 1e-15


def test_residual_of_single_site_vector():
    H = assemble_hamiltonian(free_laplacian(), 1.0, LatticeBox(1, 1.0, 2.0))
    v = np.zeros(5)
    v[2] = 1.0
    rep = residual_report(H, v, 0.0)
    assert rep["r_global"] == pytest.approx(math.sqrt(4 + 1 + 1))


def test_scaling_fit_examples():
    fit = scaling_fit([0.04, 0.02, 0.01], [1.6e-4, 4e-5, 1e-5])
    assert fit["slope"] == pytest.approx(2.0) and fit["r2"] == pytest.approx(1.0) and fit["monotone"]
    assert scaling_fit([0.04, 0.02, 0.01], [3.0, 3.0, 3.0])["slope"] == pytest.approx(0.0, abs=1e-12)
    assert not scaling_fit([0.04, 0.02, 0.01], [1.0, 3.0, 2.0])["monotone"]
    with pytest.raises(ValueError):
        scaling_fit([0.1, 0.05], [1, 2])


def test_gram_of_orthogonal_vectors():
    rep = gram_report([np.array([1.0, 0.0]), np.array([0.0, 1.0])], 1.0, 1)
    assert rep["deviation"] == 0.0


@pytest.fixture(scope="module")
def ground(ref_pipe):
    br = level_branches(ref_pipe, ref_pipe.level(index=0), 4)[1][0]
    return to_x_variables(normalized_psi(ref_pipe, br)), glue_phase(ref_pipe.solution, 1.2, 1.45), br


def test_quasimode_at_origin(ground):
    q, phase, _ = ground
    eps = 0.02
    box = LatticeBox(1, eps, 1.5)
    v = assemble_quasimode(q, 4, phase, (1.0, 1.2), box)
    centre = int(np.argmin(np.abs(box.points()[:, 0])))
    expected = sum(eps ** (l2 / 2) * float(q.uhat(l2, 4)([0])) for l2 in q.orders())
    assert v[centre] == pytest.approx(expected, rel=1e-14)


def test_leading_order_profile(ground):
    q, phase, _ = ground
    eps = 0.02
    box = LatticeBox(1, eps, 0.8)
    v = assemble_quasimode(q, 0, phase, (0.9, 1.0), box)
    x = box.points()
    assert v == pytest.approx(float(q.uhat(0)([0])) * np.exp(-phase(x) / eps), rel=1e-14)


def test_norm_matches_gaussian_mass(ground):
    q, phase, _ = ground
    for eps in (0.04, 0.01):
        box = LatticeBox(1, eps, 1.5)
        v = assemble_quasimode(q, 4, phase, (1.0, 1.2), box)
        g = gram_report([v], eps, 1, gaussian_mass([1], eps))["gram"][0][0]
        assert abs(g - 1) < 0.01


def test_cutoff_outside_phase_region(ground):
    q, phase, _ = ground
    with pytest.raises(VerificationError):
        assemble_quasimode(q, 4, phase, (1.0, 1.3), LatticeBox(1, 0.05, 1.5))


def test_residual_decreases(ground, ref_pipe):
    q, phase, br = ground
    vals = []
    for eps in (0.04, 0.02, 0.01):
        box = LatticeBox(1, eps, 1.5)
        H = assemble_hamiltonian(ref_pipe.model, eps, box)
        v = assemble_quasimode(q, 4, phase, (1.0, 1.2), box)
        rep = residual_report(H, v, eps * br.eigenvalue.evaluate(eps, 4), interior_mask(box, 1.0, 1))
        vals.append(rep["r_interior"])
        assert rep["r_interior"] <= rep["r_global"] * (1 + 1e-12)
    assert vals[0] > vals[1] > vals[2]


def test_lattice_restriction_commutes():
    """H on a restricted smooth function equals the continuum stencil on the offset lattice."""
    m = variable_hop_model()
    eps, x0 = 0.05, (0.0123,)
    box = LatticeBox(1, eps, 1.0, x0)
    f = lambda x: (1 + x - x ** 3) * np.exp(-x * x / (2 * eps))  # noqa: E731
    X = box.points()[:, 0]
    Hf = assemble_hamiltonian(m, eps, box) @ f(X)
    stencil = sum(eps ** l * V.to_float().evaluate_array(X[:, None]) for l, V in enumerate(m.potential)) * f(X)
    for eta, orders in m.hops.items():
        a = sum(eps ** k * p.to_float().evaluate_array(X[:, None]) for k, p in enumerate(orders))
        stencil = stencil + a * f(X + eps * eta[0])
    assert np.allclose(Hf[1:-1], stencil[1:-1], rtol=1e-13, atol=1e-13)


def test_transformed_quasimode_path():
    pipe = build_pipeline(anisotropic_model(), 2, alpha_cutoff=2)
    C = pipe.normal.C
    br = level_branches(pipe, pipe.level(index=0))[1][0]
    q = to_x_variables(normalized_psi(pipe, br))
    phase = glue_phase(pipe.solution, 1.2, 1.45)
    res = []
    for eps in (0.08, 0.04, 0.02):
        box = LatticeBox(2, eps, 1.6)
        H = assemble_hamiltonian(anisotropic_model(), eps, box)
        v = assemble_quasimode(q, 4, phase, (1.0, 1.2), box, C=C)
        mask = interior_mask(box, 1.0, 1, C=C)
        res.append(residual_report(H, v, eps * br.eigenvalue.evaluate(eps, 4), mask)["r_interior"])
        g = gram_report([v], eps, 2, gaussian_mass(pipe.solution.lam, eps))["gram"][0][0]
        assert abs(g - 1) < 0.01
    assert scaling_fit([0.08, 0.04, 0.02], res)["slope"] > 2.5
