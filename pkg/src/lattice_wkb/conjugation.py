"""Expansion of the conjugated, rescaled operator on polynomials.

With ``x = sigma*y``, ``sigma = sqrt(eps)``, the operator

    G_hat u(y) = eps^{-1} e^{phi(x)/eps} H'(e^{-phi/eps} u(./sigma))(x)

is expanded by straight formal-series algebra in ``sigma`` on every monomial
``u = y^beta``. For each hop ``eta`` with displacement ``c = C eta``:

    exponent   (phi(x) - phi(x + eps c)) / eps,
    coefficient sum_k sigma^{2k} a^{(k)}_eta(sigma y),
    shift      u(y + sigma c),

plus the potential ``sum_l sigma^{2l} V_l(sigma y)``, all times ``sigma^{-2}``.
The coefficient of ``eps^k`` is ``G_k u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .eikonal import EikonalSolution
from .model import LatticeModel, harmonic_shift
from .polynomial import Context, DiffOperator, EXACT, FLOAT, Polynomial, monomials_up_to, multi_factorial
from .series import PolySeries, series_exp


class ConjugationError(RuntimeError):
    pass


def _order2(k) -> int:
    k2 = 2 * Fraction(k).limit_denominator(4) if not isinstance(k, int) else 2 * k
    if k2 != int(k2):
        raise ValueError(f"order {k} is not a half-integer")
    return int(k2)


def _scaled_series(p: Polynomial, base2: int, trunc2: int, d: int) -> dict[int, Polynomial]:
    """``sigma^{base2} p(sigma y)`` as ``{order2: homogeneous part}``."""
    out: dict[int, Polynomial] = {}
    for q, part in p.homogeneous_parts().items():
        k = base2 + q
        if k <= trunc2:
            out[k] = out[k] + part if k in out else part
    return out


def _shift_series(u: Polynomial, c, trunc2: int, exact: bool) -> dict[int, Polynomial]:
    """``u(y + sigma c) = sum_m sigma^m (c.grad)^m u / m!``."""
    out = {0: u}
    term = u
    m = 1
    while m <= trunc2:
        term = term.directional(c)
        if term.is_zero():
            break
        out[m] = term * (Fraction(1, math.factorial(m)) if exact else 1.0 / math.factorial(m))
        m += 1
    return out


@dataclass
class ConjugatedExpansion:
    """Operators ``G_k``, ``k = 0, 1/2, ..., N``, acting on polynomials.

    Columns (the images of monomials) are computed on demand and cached; the
    validity degree ``D`` bounds admissible inputs of ``G_k`` by ``D - 2k``.
    """

    model: LatticeModel
    solution: EikonalSolution
    N2: int
    D: int
    ctx: Context = EXACT
    tol: float = 1e-9
    _hop_series: dict = field(default_factory=dict, repr=False)
    _pot_series: PolySeries | None = field(default=None, repr=False)
    _columns: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        d = self.model.d
        T = self.N2 + 2  # raw truncation, before the overall sigma^{-2}
        self.raw_trunc2 = T
        exact = self.ctx.exact
        phi_parts = {p + 2: piece for p, piece in enumerate(self.solution.pieces)}
        if self.solution.jet_degree < self.N2 + 2:
            raise ConjugationError(
                f"eikonal jet degree {self.solution.jet_degree} < 2N + 2 = {self.N2 + 2}")
        for eta in self.model.hops:
            coeff = {}
            for k in range(self.model.K_a + 1):
                a = self.model.a(eta, k)
                for o, part in _scaled_series(a, 2 * k, T, d).items():
                    coeff[o] = coeff[o] + part if o in coeff else part
            coeff_series = PolySeries(coeff, T, d=d)
            if coeff_series.is_zero():
                continue
            c = self.model.displacement(eta)
            expo: dict[int, Polynomial] = {}
            for p, piece in phi_parts.items():
                term = piece
                m = 1
                while p - 2 + m <= T:
                    term = term.directional(c)
                    if term.is_zero():
                        break
                    o = p - 2 + m
                    val = -term * (Fraction(1, math.factorial(m)) if exact else 1.0 / math.factorial(m))
                    expo[o] = expo[o] + val if o in expo else val
                    m += 1
            E = series_exp(PolySeries(expo, T, d=d))
            S = coeff_series * E
            if not exact:
                S = S.chop(self.ctx, 1.0)
            self._hop_series[eta] = (S.truncate(T), c)
        pot = {}
        for ell in range(self.model.K_V + 1):
            for o, part in _scaled_series(self.model.V(ell), 2 * ell, T, d).items():
                pot[o] = pot[o] + part if o in pot else part
        self._pot_series = PolySeries(pot, T, d=d)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def N(self) -> Fraction:
        return Fraction(self.N2, 2)

    def raw(self, beta) -> PolySeries:
        """Full expansion of ``G_hat y^beta`` including orders ``-1`` and ``-1/2`` (before checks)."""
        d = self.d
        T = self.raw_trunc2
        u = Polynomial.monomial(beta)
        total = self._pot_series * PolySeries({0: u}, None, d=d)
        for eta, (S, c) in self._hop_series.items():
            sh = PolySeries(_shift_series(u, c, T, self.ctx.exact), T, d=d)
            total = total + S * sh
        total = total.truncate(T).shift(-2)
        if not self.ctx.exact:
            total = total.chop(self.ctx, 1.0)
        return total

    def column(self, beta) -> PolySeries:
        beta = tuple(beta)
        if beta in self._columns:
            return self._columns[beta]
        full = self.raw(beta)
        neg = {k: full.get(k) for k in (-2, -1)}
        bad = {k: p for k, p in neg.items() if not self._zero(p)}
        if bad:
            desc = "; ".join(f"order {Fraction(k, 2)}: surviving y-degrees "
                             f"{sorted(set(sum(a) for a in p.terms)) }" for k, p in bad.items())
            raise ConjugationError(
                f"negative orders do not cancel for y^{beta} ({desc}); "
                "the eikonal jet is wrong or too short")
        col = PolySeries({k: p for k, p in full.coeffs.items() if k >= 0}, full.trunc2, d=self.d)
        self._columns[beta] = col
        return col

    def negative_orders(self, beta) -> dict[int, Polynomial]:
        full = self.raw(tuple(beta))
        return {-2: full.get(-2), -1: full.get(-1)}

    def _zero(self, p: Polynomial) -> bool:
        if self.ctx.exact:
            return p.is_zero()
        return p.max_abs() <= self.tol

    # -- application -----------------------------------------------------
    def apply2(self, k2: int, u: Polynomial, check: bool = True) -> Polynomial:
        if k2 < 0 or k2 > self.N2:
            raise ValueError(f"order {Fraction(k2, 2)} outside 0..{self.N}")
        if u.d != self.d:
            raise ValueError("dimension mismatch")
        if check and u.degree() > self.D - k2:
            raise ValueError(f"input degree {u.degree()} exceeds validity {self.D - k2} for G_{Fraction(k2, 2)}")
        out = Polynomial(self.d)
        for beta, c in u.terms.items():
            p = self.column(beta).get(k2)
            if not p.is_zero():
                out = out + p * c
        if not self.ctx.exact:
            out = out.chop(self.ctx)
        return out

    def apply_series(self, p: PolySeries, check: bool = True) -> PolySeries:
        """``G p = sum_{j + r = l} eps^l G_r p_j`` through the available truncation."""
        floor = p.floor2 if p.coeffs else 0
        trunc = self.N2 + (floor if p.coeffs else 0)
        if p.trunc2 is not None:
            trunc = min(trunc, p.trunc2)
        out: dict[int, Polynomial] = {}
        for j, pj in p.coeffs.items():
            for r in range(0, self.N2 + 1):
                if j + r > trunc:
                    break
                q = self.apply2(r, pj, check)
                if not q.is_zero():
                    out[j + r] = out[j + r] + q if (j + r) in out else q
        return PolySeries(out, int(trunc) if trunc != math.inf else None, d=self.d)

    def matrix(self, k2: int, degree: int | None = None) -> list[tuple[tuple, tuple, object]]:
        """Sparse triplets ``(output exponent, input exponent, value)`` of ``G_k`` on monomials."""
        degree = self.D - k2 if degree is None else degree
        trip = []
        for beta in monomials_up_to(self.d, degree):
            for gamma, c in self.column(beta).get(k2).sorted_terms():
                trip.append((gamma, beta, c))
        return trip


def conjugate_expand(model: LatticeModel, solution: EikonalSolution, N, D: int | None = None,
                     ctx: Context | None = None, tol: float = 1e-9) -> ConjugatedExpansion:
    if ctx is None:
        ctx = EXACT if (model.is_exact() and solution.ctx.exact) else FLOAT
    N2 = _order2(N)
    if D is None:
        D = 2 * N2 + 8
    return ConjugatedExpansion(model, solution, N2, D, ctx, tol)


def gk_apply(expansion: ConjugatedExpansion, k, u: Polynomial) -> Polynomial:
    return expansion.apply2(_order2(k), u)


def gk_as_diffop(expansion: ConjugatedExpansion, k, max_order: int | None = None) -> DiffOperator:
    """Recover ``G_k = sum_alpha b_alpha d^alpha`` from its action on monomials.

    Coefficients are solved in graded order; those with ``|alpha| > 2k + 2`` must vanish and
    reapplying the operator must reproduce every computed column.
    """
    k2 = _order2(k)
    d = expansion.d
    if max_order is None:
        max_order = min(k2 + 4, expansion.D - k2)
    coeffs: dict[tuple, Polynomial] = {}
    exact = expansion.ctx.exact
    for beta in monomials_up_to(d, max_order):
        image = expansion.apply2(k2, Polynomial.monomial(beta), check=False)
        for alpha, b in coeffs.items():
            if all(a <= bb for a, bb in zip(alpha, beta)):
                f = multi_factorial(beta) // multi_factorial(tuple(bb - a for a, bb in zip(alpha, beta)))
                image = image - b * Polynomial.monomial(tuple(bb - a for a, bb in zip(alpha, beta)), f)
        f = multi_factorial(beta)
        b = image * (Fraction(1, f) if exact else 1.0 / f)
        if not exact:
            b = b.chop(expansion.ctx, 1.0)
        if not b.is_zero():
            if sum(beta) > k2 + 2:
                raise ConjugationError(
                    f"G_{Fraction(k2, 2)} has a derivative term of order {sum(beta)} at alpha={beta}, "
                    f"above 2k+2 = {k2 + 2}")
            coeffs[beta] = b
    op = DiffOperator(d, coeffs)
    for beta in monomials_up_to(d, max_order):
        u = Polynomial.monomial(beta)
        lhs = expansion.apply2(k2, u, check=False)
        rhs = op.apply(u)
        ok = (lhs == rhs) if exact else lhs.allclose(rhs, expansion.tol)
        if not ok:
            raise ConjugationError(f"reconstruction of G_{Fraction(k2, 2)} inconsistent at alpha={beta}")
    return op


def structure_report(expansion: ConjugatedExpansion, k) -> dict:
    """Degree/parity pattern of the extracted coefficients ``b_{k,alpha}``."""
    k2 = _order2(k)
    op = gk_as_diffop(expansion, Fraction(k2, 2))
    rows = []
    violations = []
    notes = []
    for alpha, b in sorted(op.coeffs.items(), key=lambda t: (sum(t[0]), t[0])):
        n = sum(alpha)
        bound = k2 if n == 0 else k2 + 2 - n
        want = "even" if (k2 - n) % 2 == 0 else "odd"
        par = b.parity()
        deg = b.degree()
        rows.append({"alpha": list(alpha), "degree": deg, "parity": par})
        if par not in (want, "zero"):
            violations.append(f"alpha={alpha}: parity {par}, expected {want}")
        if n == 0 and deg > k2:
            notes.append(f"b_k has degree {deg} > 2k = {k2} (allowed up to 2k+2)")
            if deg > k2 + 2:
                violations.append(f"b_k degree {deg} > 2k+2")
        elif n > 0 and deg > bound:
            violations.append(f"alpha={alpha}: degree {deg} > {bound}")
    return {"k2": k2, "coefficients": rows, "violations": violations, "notes": notes,
            "ok": not violations}


def g0_closed_form(expansion: ConjugatedExpansion) -> DiffOperator:
    """``Delta phi_0 + 2 grad phi_0 . grad - Delta + V_1(0) + t_1(0,0)``."""
    d = expansion.d
    phi0 = expansion.solution.pieces[0]
    coeffs: dict[tuple, Polynomial] = {}
    lap = Polynomial(d)
    for nu in range(d):
        lap = lap + phi0.diff(nu, 2)
    coeffs[(0,) * d] = lap + harmonic_shift(expansion.model)
    for nu in range(d):
        e1 = tuple(1 if j == nu else 0 for j in range(d))
        e2 = tuple(2 if j == nu else 0 for j in range(d))
        coeffs[e1] = phi0.diff(nu) * 2
        coeffs[e2] = Polynomial.constant(d, -1)
    return DiffOperator(d, coeffs)
