"""Independent reference computations used by the tests."""

from fractions import Fraction

import sympy as sp

from lattice_wkb.hermite import HermiteBasis, gaussian_pairing
from lattice_wkb.polynomial import monomials_up_to


def eikonal_oracle(degree):
    """Reverse 2 sinh(u/2) = x (equivalent to 2cosh u - 2 = x^2) and integrate u = phi'."""
    x, u = sp.symbols("x u")
    g = sp.series(2 * sp.sinh(u / 2), u, 0, degree).removeO()
    # fixed point u = x - (g(u) - u) in the truncated power series ring
    sol = x
    for _ in range(degree):
        sol = sp.expand(x - (g.subs(u, sol) - sol))
        sol = sum(sol.coeff(x, k) * x ** k for k in range(degree))
    phi = sp.integrate(sol, x)
    check = sp.series(2 * sp.cosh(sp.diff(phi, x)) - 2 - x ** 2, x, 0, degree + 1).removeO()
    assert sp.expand(check) == 0
    return {k: Fraction(int(sp.Rational(phi.coeff(x, k)).p), int(sp.Rational(phi.coeff(x, k)).q))
            for k in range(2, degree + 1)}


def rs_second_order(expansion, lam, alpha, reach):
    """Brute-force nondegenerate E_1 from Gaussian matrix elements of G_{1/2} and G_1."""
    hb = HermiteBasis(lam)

    def element(r2, b, a):
        return gaussian_pairing(lam, hb.monic(b) * expansion.apply2(r2, hb.monic(a))) / hb.gram(b)

    e0 = hb.energy(alpha)
    out = element(2, alpha, alpha)
    for beta in monomials_up_to(len(lam), sum(alpha) + reach):
        if beta != alpha:
            out += element(1, alpha, beta) * element(1, beta, alpha) / (e0 - hb.energy(beta))
    return out
