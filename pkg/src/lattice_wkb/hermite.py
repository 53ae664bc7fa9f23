"""Gaussian moments, monic Hermite bases, harmonic levels and the weighted pairing.

All pairings use the normalized Gaussian functional for the weight
``exp(-sum_nu lambda_nu y_nu^2)``, so that the moment of ``1`` is ``1`` and every
moment is rational whenever the frequencies are.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .eikonal import EikonalSolution
from .polynomial import Polynomial, graded_key, is_exact_number, monomials_up_to
from .series import PolySeries, PuiseuxScalar, series_exp


class AmbiguousDegeneracy(ValueError):
    pass


def _is_exact_seq(lam) -> bool:
    return all(is_exact_number(l) for l in lam)


def moment_1d(n: int, lam):
    if n % 2:
        return 0
    k = n // 2
    dfact = math.prod(range(1, 2 * k, 2))
    if is_exact_number(lam):
        return Fraction(dfact) / (2 * Fraction(lam)) ** k
    return dfact / (2.0 * lam) ** k


def gaussian_moment(lam, beta):
    """``prod_nu m_{beta_nu}(lambda_nu)`` with ``m_{2n} = (2n-1)!!/(2 lambda)^n``."""
    out = 1
    for l, b in zip(lam, beta):
        m = moment_1d(b, l)
        if m == 0:
            return Fraction(0) if _is_exact_seq(lam) else 0.0
        out = out * m
    return out


def gaussian_pairing(lam, p: Polynomial):
    """The normalized Gaussian functional applied to ``p``."""
    total = Fraction(0) if _is_exact_seq(lam) and p.is_exact() else 0.0
    for alpha, c in p.terms.items():
        if any(a % 2 for a in alpha):
            continue
        total = total + c * gaussian_moment(lam, alpha)
    return total


@dataclass
class HermiteBasis:
    """Monic (default) or orthonormal Hermite polynomials for the frequencies ``lam``."""

    lam: list
    mode: str = "monic"
    shift: object = 0
    _cache1d: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in ("monic", "orthonormal"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.exact = _is_exact_seq(self.lam) and is_exact_number(self.shift)
        if self.mode == "orthonormal" and self.exact:
            self.exact = False
            self.lam = [float(l) for l in self.lam]
            self.shift = float(self.shift)

    @property
    def d(self) -> int:
        return len(self.lam)

    def _one_d(self, nu: int, n: int) -> Polynomial:
        """Monic ``h_{n+1} = y h_n - n/(2 lambda) h_{n-1}`` in the single variable ``y_nu``."""
        key = (nu, n)
        if key in self._cache1d:
            return self._cache1d[key]
        d = self.d
        if n == 0:
            p = Polynomial.constant(d, 1)
        elif n == 1:
            p = Polynomial.variable(d, nu)
        else:
            lam = self.lam[nu]
            c = Fraction(n - 1) / (2 * Fraction(lam)) if self.exact else (n - 1) / (2.0 * lam)
            p = Polynomial.variable(d, nu) * self._one_d(nu, n - 1) - self._one_d(nu, n - 2) * c
        self._cache1d[key] = p
        return p

    def monic(self, alpha) -> Polynomial:
        alpha = tuple(alpha)
        if alpha not in self._cache:
            p = Polynomial.constant(self.d, 1)
            for nu, a in enumerate(alpha):
                if a:
                    p = p * self._one_d(nu, a)
            self._cache[alpha] = p
        return self._cache[alpha]

    def gram(self, alpha):
        """``g_alpha = prod alpha_nu!/(2 lambda_nu)^alpha_nu`` (pairing of ``h_alpha`` with itself)."""
        out = Fraction(1) if self.exact else 1.0
        for l, a in zip(self.lam, alpha):
            out = out * (Fraction(math.factorial(a)) / (2 * Fraction(l)) ** a if self.exact
                         else math.factorial(a) / (2.0 * l) ** a)
        return out

    def __call__(self, alpha) -> Polynomial:
        p = self.monic(alpha)
        if self.mode == "orthonormal":
            return p * (1.0 / math.sqrt(self.gram(alpha)))
        return p

    def energy(self, alpha):
        return sum(l * (2 * a + 1) for l, a in zip(self.lam, alpha)) + self.shift

    def to_hermite(self, p: Polynomial) -> dict[tuple, object]:
        """Coefficients of ``p`` in the monic basis (triangular elimination from the top term)."""
        out: dict[tuple, object] = {}
        rest = p
        while not rest.is_zero():
            alpha = max(rest.terms, key=graded_key)
            c = rest.terms[alpha]
            out[alpha] = c
            rest = rest - self.monic(alpha) * c
            if not self.exact:
                rest = Polynomial(rest.d, {a: v for a, v in rest.terms.items() if abs(v) > 1e-14 * (1 + abs(c))})
        return out

    def from_hermite(self, coeffs: dict) -> Polynomial:
        out = Polynomial(self.d)
        for alpha, c in coeffs.items():
            out = out + self.monic(alpha) * c
        return out

    def pairing(self, p: Polynomial, q: Polynomial):
        return gaussian_pairing(self.lam, p * q)


@dataclass
class HarmonicLevel:
    E: object
    members: list
    tol: float = 0.0

    @property
    def m(self) -> int:
        return len(self.members)

    def contains(self, alpha) -> bool:
        return tuple(alpha) in self.members

    def to_json(self) -> dict:
        E = self.E
        return {"E": str(E) if isinstance(E, Fraction) else float(E),
                "I_E": [list(a) for a in self.members], "m": self.m, "tol": self.tol}


def harmonic_levels(lam, shift=0, alpha_cutoff: int = 6, tol: float | None = None) -> list[HarmonicLevel]:
    """Group ``e_alpha = sum lambda_nu (2 alpha_nu + 1) + shift`` over ``|alpha| <= alpha_cutoff``.

    Only levels lying strictly below every energy with ``|alpha| = alpha_cutoff + 1`` are
    returned, so that each index set is complete.
    """
    d = len(lam)
    exact = _is_exact_seq(lam) and is_exact_number(shift)
    energies = [(sum(l * (2 * a + 1) for l, a in zip(lam, alpha)) + shift, alpha)
                for alpha in monomials_up_to(d, alpha_cutoff)]
    ceiling = min(sum(l * (2 * a + 1) for l, a in zip(lam, alpha)) + shift
                  for alpha in itertools.product(range(alpha_cutoff + 2), repeat=d)
                  if sum(alpha) == alpha_cutoff + 1)
    energies.sort(key=lambda t: (t[0], graded_key(t[1])))
    groups: list[HarmonicLevel] = []
    for e, alpha in energies:
        t = 0.0 if exact else (1e-8 * (1 + abs(e)) if tol is None else tol)
        if groups and (e == groups[-1].E if exact else abs(e - groups[-1].E) <= t):
            groups[-1].members.append(alpha)
            continue
        if groups and not exact and abs(e - groups[-1].E) <= 2 * t:
            raise AmbiguousDegeneracy(
                f"energies {groups[-1].E} and {e} are closer than twice the tolerance {t:g}")
        groups.append(HarmonicLevel(e, [alpha], t))
    return [g for g in groups if g.E < ceiling]


def find_level(levels: list[HarmonicLevel], E=None, index: int | None = None) -> HarmonicLevel:
    if index is not None:
        return levels[index]
    for lev in levels:
        if (lev.E == E) if lev.tol == 0 else abs(lev.E - E) <= max(lev.tol, 1e-8):
            return lev
    raise ValueError(f"no harmonic level at E = {E}")


# -- weights and the K-valued pairing -------------------------------------

@dataclass
class WeightExpansion:
    """``exp(-2 sum_{k>=1} eps^{k/2} phi_k(y)) = sum_l eps^l omega_l(y)`` through order ``N_omega``."""

    lam: list
    series: PolySeries

    def omega(self, ell) -> Polynomial:
        return self.series.get(int(round(2 * ell)))

    @property
    def trunc2(self) -> int:
        return self.series.trunc2


def weight_expansion(solution: EikonalSolution, N_omega) -> WeightExpansion:
    T = int(round(2 * N_omega))
    if solution.N_phi < T:
        raise ValueError(f"eikonal jet degree {solution.jet_degree} < 2 N_omega + 2 = {T + 2}")
    d = solution.d
    coeffs = {}
    for k in range(1, T + 1):
        piece = solution.pieces[k]
        if not piece.is_zero():
            coeffs[k] = piece * (-2)
    S = PolySeries(coeffs, T, d=d)
    if S.is_zero():
        one = Fraction(1) if solution.ctx.exact else 1.0
        return WeightExpansion(solution.lam, PolySeries({0: Polynomial.constant(d, one)}, T, d=d))
    return WeightExpansion(solution.lam, series_exp(S))


def _as_series(p, d: int) -> PolySeries:
    if isinstance(p, PolySeries):
        return p
    if isinstance(p, Polynomial):
        return PolySeries({0: p}, None, d=d)
    raise TypeError(f"expected Polynomial or PolySeries, got {type(p).__name__}")


def inner_k(p, q, weights: WeightExpansion, trunc2: int | None = None) -> PuiseuxScalar:
    """``<p, q>_K``: Gaussian pairing of ``p q omega`` collected by order."""
    d = len(weights.lam)
    prod = _as_series(p, d) * _as_series(q, d) * weights.series
    if trunc2 is not None:
        prod = prod.truncate(trunc2)
    coeffs = {}
    for k, c in prod.coeffs.items():
        v = gaussian_pairing(weights.lam, c)
        if v != 0:
            coeffs[k] = v
    return PuiseuxScalar(coeffs, prod.trunc2)
