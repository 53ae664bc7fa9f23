"""Truncated formal series in ``eps**(1/2)``.

Orders are stored doubled (``order2 = 2*j``) so half-integer exponents stay exact
integers. Every series carries its truncation ``trunc2``: coefficients above it are
unknown, not zero. ``trunc2=None`` marks a series known exactly (finitely many terms).
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import Callable, Mapping

from .polynomial import Polynomial, is_exact_number

INF = math.inf


def _tr(t):
    return INF if t is None else t


def _untr(t):
    return None if t == INF else int(t)


def _is_zero(c) -> bool:
    if isinstance(c, Polynomial):
        return c.is_zero()
    return c == 0


class Series:
    """Common machinery for :class:`PuiseuxScalar` and :class:`PolySeries`."""

    __slots__ = ("coeffs", "trunc2")

    def __init__(self, coeffs: Mapping[int, object] | None = None, trunc2: int | None = None):
        self.trunc2 = trunc2
        cl = {}
        for k, c in (coeffs or {}).items():
            k = int(k)
            if trunc2 is not None and k > trunc2:
                continue
            if not _is_zero(c):
                cl[k] = c
        self.coeffs: dict[int, object] = cl

    # -- subclass hooks -----------------------------------------------
    def _zero_coeff(self):
        raise NotImplementedError

    def _new(self, coeffs, trunc2):
        return type(self)(coeffs, trunc2)

    # -- queries ------------------------------------------------------
    @property
    def floor2(self) -> float:
        """Doubled floor order ``2*c``; ``+inf`` for the zero series."""
        return min(self.coeffs) if self.coeffs else INF

    @property
    def floor(self):
        f = self.floor2
        return f if f == INF else Fraction(f, 2)

    @property
    def trunc(self):
        return None if self.trunc2 is None else Fraction(self.trunc2, 2)

    def __getitem__(self, order2: int):
        if self.trunc2 is not None and order2 > self.trunc2:
            raise KeyError(f"order {order2}/2 is beyond truncation {self.trunc2}/2")
        return self.coeffs.get(order2, self._zero_coeff())

    def get(self, order2: int):
        return self.coeffs.get(order2, self._zero_coeff())

    def is_zero(self) -> bool:
        return not self.coeffs

    def orders(self) -> list[int]:
        return sorted(self.coeffs)

    def truncate(self, trunc2: int | None) -> "Series":
        """Re-truncate at ``trunc2`` (never raises the known truncation)."""
        t = _untr(min(_tr(trunc2), _tr(self.trunc2)))
        return self._new(self.coeffs, t)

    def shift(self, delta2: int) -> "Series":
        """Multiply by ``eps**(delta2/2)``."""
        t = None if self.trunc2 is None else self.trunc2 + delta2
        return self._new({k + delta2: c for k, c in self.coeffs.items()}, t)

    def map(self, f: Callable) -> "Series":
        return self._new({k: f(c) for k, c in self.coeffs.items()}, self.trunc2)

    def half_integer_coeffs(self) -> dict[int, object]:
        return {k: c for k, c in self.coeffs.items() if k % 2}

    # -- arithmetic ---------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Series):
            return other
        if isinstance(other, Polynomial):
            return PolySeries({0: other}, None)
        if isinstance(other, Number):
            return PuiseuxScalar({0: other}, None)
        return None

    def _build(self, o, coeffs, trunc2):
        if isinstance(self, PolySeries) or isinstance(o, PolySeries):
            d = getattr(self, "d", None) or getattr(o, "d", None)
            return PolySeries(coeffs, trunc2, d=d)
        return PuiseuxScalar(coeffs, trunc2)

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        t = min(_tr(self.trunc2), _tr(o.trunc2))
        out = dict(self.coeffs)
        for k, c in o.coeffs.items():
            out[k] = out[k] + c if k in out else c
        return self._build(o, out, _untr(t))

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda c: -c)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number) and not isinstance(other, Series):
            if other == 0:
                return self._new({}, self.trunc2)
            return self.map(lambda c: c * other)
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        # tightest valid truncation: min(N_a + c_b, N_b + c_a)
        t = min(_tr(self.trunc2) + o.floor2, _tr(o.trunc2) + self.floor2)
        if not self.coeffs and not o.coeffs:
            t = _tr(self.trunc2) + _tr(o.trunc2) + 1
        out: dict[int, object] = {}
        for k1, c1 in self.coeffs.items():
            for k2, c2 in o.coeffs.items():
                k = k1 + k2
                if k > t:
                    continue
                p = c1 * c2
                out[k] = out[k] + p if k in out else p
        return self._build(o, out, _untr(t))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, Number):
            if is_exact_number(other):
                other = Fraction(other)
            return self * (1 / other)
        if isinstance(other, PuiseuxScalar):
            return self * other.inverse()
        return NotImplemented

    def __pow__(self, n: int):
        out = self._coerce(1) if isinstance(self, PuiseuxScalar) else None
        if out is None:
            raise TypeError("powers are only defined for scalar series; use repeated products")
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def equals_through(self, other: "Series", trunc2: int | None = None, tol: float | None = None) -> bool:
        """Coefficientwise comparison up to ``trunc2`` (default: common truncation)."""
        o = self._coerce(other)
        t = min(_tr(self.trunc2), _tr(o.trunc2), _tr(trunc2))
        keys = {k for k in set(self.coeffs) | set(o.coeffs) if k <= t}
        for k in keys:
            d = self.get(k) - o.get(k)
            if tol is None:
                if not _is_zero(d):
                    return False
            else:
                mag = d.max_abs() if isinstance(d, Polynomial) else abs(d)
                if mag > tol:
                    return False
        return True

    def __eq__(self, other):
        o = self._coerce(other) if not isinstance(other, Series) else other
        if o is None:
            return NotImplemented
        return self.trunc2 == o.trunc2 and self.coeffs == o.coeffs

    __hash__ = None

    def __repr__(self):
        body = " + ".join(f"({c})*eps^({Fraction(k, 2)})" for k, c in sorted(self.coeffs.items())) or "0"
        tail = "" if self.trunc2 is None else f" + O(eps^({Fraction(self.trunc2 + 1, 2)}))"
        return f"{type(self).__name__}[{body}{tail}]"


class PuiseuxScalar(Series):
    """Element of the field of truncated Laurent series in ``eps**(1/2)``."""

    __slots__ = ()

    def _zero_coeff(self):
        return 0

    @classmethod
    def constant(cls, c, trunc2: int | None = None):
        return cls({0: c}, trunc2)

    def inverse(self) -> "PuiseuxScalar":
        """Multiplicative inverse; truncation shrinks by ``2*floor``."""
        if not self.coeffs:
            raise ZeroDivisionError("inverse of the zero series")
        c = self.floor2
        lead = self.coeffs[c]
        lead_inv = Fraction(1) / lead if is_exact_number(lead) else 1.0 / lead
        if self.trunc2 is None:
            raise ValueError("inverse of an exact series needs an explicit truncation; call truncate() first")
        rel = self.trunc2 - c  # relative precision of the normalised series
        # u = self / (lead * eps^c) = 1 + x, with x of floor >= 1/2
        inv = {0: lead_inv}
        for n in range(1, rel + 1):
            s = 0
            for k in range(1, n + 1):
                a = self.coeffs.get(c + k, 0)
                if a != 0 and (n - k) in inv:
                    s = s + a * inv[n - k]
            inv[n] = -s * lead_inv
        return PuiseuxScalar({k - c: v for k, v in inv.items()}, rel - c)

    def evaluate(self, eps: float, upto2: int | None = None) -> float:
        t = _tr(upto2)
        return float(sum(float(c) * eps ** (k / 2) for k, c in self.coeffs.items() if k <= t))

    def to_float(self) -> "PuiseuxScalar":
        return self.map(float)


class PolySeries(Series):
    """Element of V: a truncated series in ``eps**(1/2)`` with polynomial coefficients."""

    __slots__ = ("d",)

    def __init__(self, coeffs=None, trunc2=None, d: int | None = None):
        if d is None:
            for c in (coeffs or {}).values():
                d = c.d
                break
        self.d = d
        super().__init__(coeffs, trunc2)

    def _zero_coeff(self):
        if self.d is None:
            raise ValueError("dimension of an empty PolySeries is unknown")
        return Polynomial(self.d)

    def _new(self, coeffs, trunc2):
        return PolySeries(coeffs, trunc2, d=self.d)

    def degree_profile(self) -> dict[int, float]:
        return {k: c.degree() for k, c in sorted(self.coeffs.items())}

    def chop(self, ctx, scale=None) -> "PolySeries":
        return self.map(lambda p: p.chop(ctx, scale))


def series_exp(S: PolySeries) -> PolySeries:
    """``exp(S)`` for a series that vanishes at ``eps = 0`` (floor order >= 1/2)."""
    if isinstance(S, PolySeries):
        d = S.d
        one = Polynomial.constant(d, 1)
        result_cls = lambda c, t: PolySeries(c, t, d=d)  # noqa: E731
    else:
        one = 1
        result_cls = PuiseuxScalar
    if S.trunc2 is None:
        raise ValueError("series_exp needs a truncated series")
    if S.coeffs and S.floor2 <= 0:
        raise ValueError("series_exp requires floor order > 0 (the exponent must vanish at eps=0)")
    if not S.coeffs:
        return result_cls({0: one}, S.trunc2)
    exact = _series_exact(S)
    out = result_cls({0: one}, S.trunc2)
    term = result_cls({0: one}, S.trunc2)
    m = 1
    while True:
        term = term * S
        term = term.truncate(S.trunc2) * (Fraction(1, m) if exact else 1.0 / m)
        if term.is_zero() or m * S.floor2 > S.trunc2:
            break
        out = out + term
        m += 1
    return out.truncate(S.trunc2)


def _series_exact(S) -> bool:
    for c in S.coeffs.values():
        if isinstance(c, Polynomial):
            if not c.is_exact():
                return False
        elif not is_exact_number(c):
            return False
    return True



def exact_sqrt(q) -> Fraction | None:
    """Square root of a nonnegative rational if it is rational, else ``None``."""
    q = Fraction(q)
    if q < 0:
        return None
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def series_inv_sqrt(S: PuiseuxScalar) -> PuiseuxScalar:
    """``S**(-1/2)`` for a series with floor 0 and positive leading coefficient.

    Exact inputs need a rational square root of the leading coefficient.
    """
    if S.trunc2 is None:
        raise ValueError("series_inv_sqrt needs a truncated series")
    if not S.coeffs or S.floor2 != 0:
        raise ValueError("series_inv_sqrt requires floor order 0")
    s0 = S.coeffs[0]
    if s0 <= 0:
        raise ValueError("leading coefficient must be positive")
    exact = _series_exact(S)
    if exact:
        r = exact_sqrt(s0)
        if r is None:
            raise ValueError("exact mode: leading coefficient has no rational square root")
        inv_r = 1 / r
        s0 = Fraction(s0)
    else:
        inv_r = 1.0 / math.sqrt(s0)
    X = (S * (1 / s0)) - 1  # floor >= 1/2
    out = PuiseuxScalar({0: 1}, S.trunc2)
    term = PuiseuxScalar({0: 1}, S.trunc2)
    n = 1
    while X.coeffs and n * X.floor2 <= S.trunc2:
        binom = _binom_half(n, exact)
        term = (term * X).truncate(S.trunc2)
        out = out + term * binom
        n += 1
    return (out * inv_r).truncate(S.trunc2)


def _binom_half(n: int, exact: bool):
    """Binomial coefficient ``C(-1/2, n)``."""
    c = Fraction(1)
    for k in range(n):
        c *= (Fraction(-1, 2) - k) / (k + 1)
    return c if exact else float(c)
