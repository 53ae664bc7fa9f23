"""Sparse multivariate polynomials and differential operators with polynomial coefficients.

Coefficients are either exact rationals (``int``/``Fraction``) or binary64 floats.
Python's numeric tower does the mode bookkeeping: exact inputs stay exact, any
float contaminates to float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from numbers import Number
from typing import Iterable, Mapping, Sequence

Exponent = tuple[int, ...]


@dataclass(frozen=True)
class Context:
    """Scalar mode and zero tolerance.

    In exact mode ``is_zero`` is plain equality. In float mode a value counts as zero
    when ``|s| <= tol * scale``.
    """

    exact: bool = True
    tol: float = 1e-10

    def is_zero(self, s, scale: float = 1.0) -> bool:
        if self.exact:
            return s == 0
        return abs(s) <= self.tol * max(scale, 1e-300)

    def convert(self, s):
        if self.exact:
            if isinstance(s, float):
                return Fraction(s).limit_denominator(10**12)
            return Fraction(s)
        return float(s)


EXACT = Context(exact=True)
FLOAT = Context(exact=False)


def is_exact_number(s) -> bool:
    return isinstance(s, (int, Fraction))


def graded_key(alpha: Exponent):
    """Graded lexicographic key (total degree first, then reversed lex so x1 sorts first)."""
    return (sum(alpha), tuple(-a for a in alpha))


class Polynomial:
    """Sparse polynomial in ``d`` variables; no zero coefficients are stored."""

    __slots__ = ("d", "terms")

    def __init__(self, d: int, terms: Mapping[Exponent, object] | Iterable = ()):
        self.d = d
        items = terms.items() if isinstance(terms, Mapping) else terms
        clean = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != d:
                raise ValueError(f"exponent {alpha} does not match dimension {d}")
            if c != 0:
                clean[alpha] = clean.get(alpha, 0) + c
                if clean[alpha] == 0:
                    del clean[alpha]
        self.terms: dict[Exponent, object] = clean

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, d: int) -> "Polynomial":
        return cls(d)

    @classmethod
    def constant(cls, d: int, c) -> "Polynomial":
        return cls(d, {(0,) * d: c})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c=1) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): c})

    @classmethod
    def variable(cls, d: int, nu: int) -> "Polynomial":
        alpha = [0] * d
        alpha[nu] = 1
        return cls(d, {tuple(alpha): 1})

    # -- queries ------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> float:
        if not self.terms:
            return -math.inf
        return max(sum(a) for a in self.terms)

    def low_degree(self) -> float:
        if not self.terms:
            return math.inf
        return min(sum(a) for a in self.terms)

    def parity(self) -> str:
        """One of ``'zero'``, ``'even'``, ``'odd'``, ``'mixed'``."""
        if not self.terms:
            return "zero"
        pars = {sum(a) % 2 for a in self.terms}
        if len(pars) == 2:
            return "mixed"
        return "even" if pars == {0} else "odd"

    def coeff(self, alpha: Sequence[int]):
        return self.terms.get(tuple(alpha), 0)

    def is_exact(self) -> bool:
        return all(is_exact_number(c) for c in self.terms.values())

    def max_abs(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    def sorted_terms(self) -> list[tuple[Exponent, object]]:
        return sorted(self.terms.items(), key=lambda t: graded_key(t[0]))

    def homogeneous_part(self, k: int) -> "Polynomial":
        return Polynomial(self.d, {a: c for a, c in self.terms.items() if sum(a) == k})

    def truncate_degree(self, k: int) -> "Polynomial":
        """Drop all terms of total degree above ``k``."""
        return Polynomial(self.d, {a: c for a, c in self.terms.items() if sum(a) <= k})

    def homogeneous_parts(self) -> dict[int, "Polynomial"]:
        parts: dict[int, dict] = {}
        for a, c in self.terms.items():
            parts.setdefault(sum(a), {})[a] = c
        return {k: Polynomial(self.d, t) for k, t in parts.items()}

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            out = dict(self.terms)
            for a, c in other.terms.items():
                out[a] = out.get(a, 0) + c
            return Polynomial(self.d, out)
        if isinstance(other, Number):
            return self + Polynomial.constant(self.d, other)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.d, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (Polynomial, Number)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            out: dict[Exponent, object] = {}
            for a, c in self.terms.items():
                for b, e in other.terms.items():
                    k = tuple(x + y for x, y in zip(a, b))
                    out[k] = out.get(k, 0) + c * e
            return Polynomial(self.d, out)
        if isinstance(other, Number):
            if other == 0:
                return Polynomial(self.d)
            return Polynomial(self.d, {a: c * other for a, c in self.terms.items()})
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            if is_exact_number(other):
                other = Fraction(other)
            return self * (1 / other)
        return NotImplemented

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.d, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Number):
            other = Polynomial.constant(self.d, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.d == other.d and self.terms == other.terms

    def __hash__(self):
        return hash((self.d, frozenset(self.terms.items())))

    def allclose(self, other: "Polynomial", tol: float = 1e-10) -> bool:
        diff = self - other
        scale = max(self.max_abs(), other.max_abs(), 1.0)
        return diff.max_abs() <= tol * scale

    def chop(self, ctx: Context = FLOAT, scale: float | None = None) -> "Polynomial":
        """Remove coefficients that ``ctx`` regards as zero (no-op in exact mode)."""
        if ctx.exact:
            return self
        if scale is None:
            scale = self.max_abs()
        return Polynomial(self.d, {a: c for a, c in self.terms.items() if not ctx.is_zero(c, scale)})

    def to_float(self) -> "Polynomial":
        return Polynomial(self.d, {a: float(c) for a, c in self.terms.items()})

    # -- calculus and substitution -------------------------------------
    def diff(self, nu: int, times: int = 1) -> "Polynomial":
        out = {}
        for a, c in self.terms.items():
            if a[nu] < times:
                continue
            f = 1
            for j in range(times):
                f *= a[nu] - j
            b = list(a)
            b[nu] -= times
            out[tuple(b)] = c * f
        return Polynomial(self.d, out)

    def diff_multi(self, alpha: Sequence[int]) -> "Polynomial":
        p = self
        for nu, k in enumerate(alpha):
            if k:
                p = p.diff(nu, k)
        return p

    def gradient(self) -> list["Polynomial"]:
        return [self.diff(nu) for nu in range(self.d)]

    def directional(self, c: Sequence) -> "Polynomial":
        """``(c . grad) P``."""
        out = Polynomial(self.d)
        for nu, cn in enumerate(c):
            if cn != 0:
                out = out + self.diff(nu) * cn
        return out

    def substitute_linear(self, M: Sequence[Sequence]) -> "Polynomial":
        """Return ``P(M x)`` for a square ``d x d`` matrix ``M``."""
        M = [list(row) for row in M]
        if len(M) != self.d or any(len(r) != self.d for r in M):
            raise ValueError("substitute_linear needs a square d x d matrix")
        lin = [Polynomial(self.d, {tuple(1 if j == mu else 0 for j in range(self.d)): M[nu][mu]
                                   for mu in range(self.d)}) for nu in range(self.d)]
        powers: dict[tuple[int, int], Polynomial] = {}

        def pw(nu, k):
            if (nu, k) not in powers:
                powers[(nu, k)] = lin[nu] ** k
            return powers[(nu, k)]

        out = Polynomial(self.d)
        for a, c in self.terms.items():
            term = Polynomial.constant(self.d, c)
            for nu, k in enumerate(a):
                if k:
                    term = term * pw(nu, k)
            out = out + term
        return out

    def scale_variables(self, s) -> "Polynomial":
        """``P(s x)`` for a scalar ``s``."""
        return Polynomial(self.d, {a: c * s ** sum(a) for a, c in self.terms.items()})

    def __call__(self, x: Sequence):
        if len(x) != self.d:
            raise ValueError("point dimension mismatch")
        total = 0
        for a, c in self.terms.items():
            t = c
            for xv, k in zip(x, a):
                if k:
                    t = t * xv ** k
            total = total + t
        return total

    def evaluate_array(self, X):
        """Vectorised evaluation at the rows of a ``(n, d)`` numpy array."""
        import numpy as np

        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for a, c in self.terms.items():
            t = np.full(X.shape[0], float(c))
            for nu, k in enumerate(a):
                if k:
                    t = t * X[:, nu] ** k
            out += t
        return out

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for a, c in self.sorted_terms():
            mono = "*".join(f"y{nu + 1}^{k}" if k > 1 else f"y{nu + 1}" for nu, k in enumerate(a) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def monomials_up_to(d: int, deg: int) -> list[Exponent]:
    """All exponents with ``|alpha| <= deg`` in graded order."""
    out = [a for a in product(range(deg + 1), repeat=d) if sum(a) <= deg]
    return sorted(out, key=graded_key)


def monomials_of_degree(d: int, deg: int) -> list[Exponent]:
    return [a for a in monomials_up_to(d, deg) if sum(a) == deg]


def multi_factorial(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


@dataclass
class DiffOperator:
    """``u -> sum_alpha b_alpha * d^alpha u`` with polynomial coefficients ``b_alpha``."""

    d: int
    coeffs: dict[Exponent, Polynomial] = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {tuple(a): p for a, p in self.coeffs.items() if not p.is_zero()}
        for a, p in self.coeffs.items():
            if len(a) != self.d or p.d != self.d:
                raise ValueError("dimension mismatch in DiffOperator")

    def apply(self, u: Polynomial) -> Polynomial:
        if u.d != self.d:
            raise ValueError(f"dimension mismatch: operator d={self.d}, polynomial d={u.d}")
        out = Polynomial(self.d)
        for a, b in self.coeffs.items():
            du = u.diff_multi(a)
            if not du.is_zero():
                out = out + b * du
        return out

    __call__ = apply

    def order(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def __eq__(self, other):
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.d == other.d and self.coeffs == other.coeffs

    def allclose(self, other: "DiffOperator", tol: float = 1e-10) -> bool:
        keys = set(self.coeffs) | set(other.coeffs)
        zero = Polynomial(self.d)
        return all(self.coeffs.get(k, zero).allclose(other.coeffs.get(k, zero), tol) for k in keys)

    def __repr__(self):
        parts = [f"({p})*d^{a}" if any(a) else f"({p})"
                 for a, p in sorted(self.coeffs.items(), key=lambda t: graded_key(t[0]))]
        return " + ".join(parts) or "0"
