"""Lattice difference operators with a one-well potential.

A model is ``(H u)(x) = sum_eta a_{eps*eta}(x; eps) u(x + eps*C*eta) + V_eps(x) u(x)`` with

* ``a_{eps*eta}(x; eps) = sum_k eps**k a[eta][k](x)``,
* ``V_eps(x) = sum_l eps**l V[l](x)``,
* a geometry matrix ``C`` (identity for models in original coordinates).

All coefficient functions are polynomials, understood as Taylor jets at ``x = 0``.
"""

from __future__ import annotations

import cmath
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .polynomial import EXACT, FLOAT, Context, Polynomial, is_exact_number
from .serialize import poly_from_json, poly_to_json, scalar_from_json, scalar_to_json
from .series import exact_sqrt

Vector = tuple[int, ...]


class ModelError(ValueError):
    """Raised for malformed models or failed normal-form preconditions."""


def _identity(d, one=1):
    return [[one if i == j else 0 * one for j in range(d)] for i in range(d)]


def matvec(M, v):
    return tuple(sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M)))


def matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[sum(A[i][k] * B[k][j] for k in range(m)) for j in range(p)] for i in range(n)]


def transpose(A):
    return [list(r) for r in zip(*A)]


@dataclass
class LatticeModel:
    d: int
    hops: dict[Vector, list[Polynomial]]
    potential: list[Polynomial]
    C: list[list] | None = None
    jet_degree: int | None = None
    name: str = ""

    def __post_init__(self):
        self.hops = {tuple(int(v) for v in eta): list(orders) for eta, orders in self.hops.items()}
        zero = (0,) * self.d
        if zero not in self.hops:
            raise ModelError("the hop set must list eta = 0 explicitly")
        for eta, orders in self.hops.items():
            if len(eta) != self.d:
                raise ModelError(f"hop {eta} has wrong dimension")
            if tuple(-e for e in eta) not in self.hops:
                raise ModelError(f"hop set is not symmetric: {eta} present without its negative")
            for p in orders:
                if p.d != self.d:
                    raise ModelError("coefficient polynomial dimension mismatch")
        for p in self.potential:
            if p.d != self.d:
                raise ModelError("potential polynomial dimension mismatch")
        if not self.potential:
            raise ModelError("potential needs at least V_0")

    # -- accessors ----------------------------------------------------
    @property
    def K_a(self) -> int:
        return max(len(o) for o in self.hops.values()) - 1

    @property
    def K_V(self) -> int:
        return len(self.potential) - 1

    def geometry(self):
        return self.C if self.C is not None else _identity(self.d)

    def displacement(self, eta: Sequence[int]):
        """Hop displacement in units of eps: ``C eta``."""
        if self.C is None:
            return tuple(eta)
        return matvec(self.C, eta)

    def a(self, eta: Sequence[int], k: int) -> Polynomial:
        orders = self.hops.get(tuple(eta))
        if orders is None or k >= len(orders):
            return Polynomial(self.d)
        return orders[k]

    def V(self, ell: int) -> Polynomial:
        return self.potential[ell] if ell < len(self.potential) else Polynomial(self.d)

    def is_exact(self) -> bool:
        polys = [p for o in self.hops.values() for p in o] + list(self.potential)
        ok = all(p.is_exact() for p in polys)
        if self.C is not None:
            ok = ok and all(is_exact_number(c) for row in self.C for c in row)
        return ok

    def nonzero_hops(self) -> list[Vector]:
        return [eta for eta, o in self.hops.items() if any(not p.is_zero() for p in o)]

    def hop_reach(self) -> int:
        return max((max(abs(e) for e in eta) for eta in self.nonzero_hops()), default=0)

    # -- (de)serialisation ---------------------------------------------
    def to_json(self) -> dict:
        rec = {
            "d": self.d,
            "hops": [{"eta": list(eta), "orders": [poly_to_json(p) for p in orders]}
                     for eta, orders in sorted(self.hops.items())],
            "potential": [poly_to_json(p) for p in self.potential],
        }
        if self.C is not None:
            rec["C"] = [[scalar_to_json(c) for c in row] for row in self.C]
        if self.jet_degree is not None:
            rec["jet_degree"] = self.jet_degree
        if self.name:
            rec["name"] = self.name
        return rec

    @classmethod
    def from_json(cls, rec: dict) -> "LatticeModel":
        d = int(rec["d"])
        hops = {tuple(h["eta"]): [poly_from_json(p, d) for p in h["orders"]] for h in rec["hops"]}
        potential = [poly_from_json(p, d) for p in rec["potential"]]
        C = rec.get("C")
        if C is not None:
            C = [[scalar_from_json(c) if isinstance(c, dict) else c for c in row] for row in C]
        return cls(d, hops, potential, C, rec.get("jet_degree"), rec.get("name", ""))

    @classmethod
    def load(cls, path: str | Path) -> "LatticeModel":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_float(self) -> "LatticeModel":
        C = None if self.C is None else [[float(c) for c in row] for row in self.C]
        return LatticeModel(self.d, {e: [p.to_float() for p in o] for e, o in self.hops.items()},
                            [p.to_float() for p in self.potential], C, self.jet_degree, self.name)


# -- shipped example models ------------------------------------------------

def laplacian_model(d: int = 1, weights: Sequence = None, potential: Polynomial | None = None,
                    name: str = "") -> LatticeModel:
    """Nearest-neighbour discrete Laplacian ``-sum_nu w_nu (u(x+e_nu) + u(x-e_nu) - 2u)`` plus a potential.

    Default potential is ``|x|^2``.
    """
    weights = list(weights) if weights is not None else [1] * d
    hops: dict[Vector, list[Polynomial]] = {}
    for nu in range(d):
        for s in (1, -1):
            eta = tuple(s if j == nu else 0 for j in range(d))
            hops[eta] = [Polynomial.constant(d, -weights[nu])]
    hops[(0,) * d] = [Polynomial.constant(d, 2 * sum(weights))]
    if potential is None:
        potential = sum((Polynomial.variable(d, nu) ** 2 for nu in range(d)), Polynomial(d))
    return LatticeModel(d, hops, [potential], name=name)


def reference_model() -> LatticeModel:
    """1D: hops +-1 with coefficient -1, on-site 2, V_0 = x^2."""
    return laplacian_model(1, name="reference-1d")


def anisotropic_model() -> LatticeModel:
    """2D: B_0 = diag(1, 4), V_0 = x1^2 + x2^2."""
    return laplacian_model(2, weights=[1, 4], name="anisotropic-2d")


def isotropic_model() -> LatticeModel:
    return laplacian_model(2, name="isotropic-2d")


def variable_hop_model() -> LatticeModel:
    """1D model with x-dependent hops ``a_{+-eps}(x; eps) = -w(x +- eps/2)``, ``w = 1 + x^2/2``.

    Reversible by construction; carries nonzero first and second eps-order hop terms.
    """
    x = Polynomial.variable(1, 0)
    half = Fraction(1, 2)
    w0 = 1 + x * x * half
    hops = {
        (1,): [-w0, -x * half, Polynomial.constant(1, Fraction(-1, 8))],
        (-1,): [-w0, x * half, Polynomial.constant(1, Fraction(-1, 8))],
        (0,): [2 * w0, Polynomial(1), Polynomial.constant(1, Fraction(1, 4))],
    }
    return LatticeModel(1, hops, [x * x], name="variable-hop-1d")


# -- symbol and B matrix ----------------------------------------------------

def symbol_t(model: LatticeModel, k: int, x: Sequence[float], xi: Sequence[float]) -> complex:
    """``t_k(x, xi) = sum_eta a^{(k)}_eta(x) exp(-i (C eta) . xi)``."""
    if k < 0 or k > model.K_a:
        raise ModelError(f"symbol order {k} out of range 0..{model.K_a}")
    total = 0j
    for eta in model.hops:
        c = model.a(eta, k)
        if c.is_zero():
            continue
        dvec = model.displacement(eta)
        phase = sum(float(a) * float(b) for a, b in zip(dvec, xi))
        total += float(c(x)) * cmath.exp(-1j * phase)
    return total


def matrix_B(model: LatticeModel, x: Sequence) -> list[list]:
    """``B(x) = -1/2 sum_eta a^{(0)}_eta(x) (C eta)(C eta)^T``."""
    d = model.d
    B = [[0] * d for _ in range(d)]
    for eta in model.hops:
        a0 = model.a(eta, 0)
        if a0.is_zero():
            continue
        val = a0(x)
        dv = model.displacement(eta)
        for i in range(d):
            for j in range(d):
                B[i][j] = B[i][j] - val * dv[i] * dv[j]
    half = Fraction(1, 2) if all(is_exact_number(v) for row in B for v in row) else 0.5
    return [[v * half for v in row] for row in B]


def hessian_at_zero(p: Polynomial) -> list[list]:
    d = p.d
    zero = (0,) * d
    H = [[0] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            H[i][j] = p.diff(i).diff(j)(zero)
    return H


def quadratic_form_coeffs(p: Polynomial) -> list[list]:
    """Symmetric matrix ``Q`` with ``p_2(x) = x^T Q x`` for the degree-2 part of ``p``."""
    d = p.d
    Q = [[0] * d for _ in range(d)]
    for a, c in p.homogeneous_part(2).terms.items():
        idx = [nu for nu, k in enumerate(a) for _ in range(k)]
        i, j = idx
        if i == j:
            Q[i][i] = Q[i][i] + c
        else:
            half = c / 2 if not is_exact_number(c) else Fraction(c) / 2
            Q[i][j] = Q[i][j] + half
            Q[j][i] = Q[j][i] + half
    return Q


# -- hypothesis validation --------------------------------------------------

@dataclass
class ValidationReport:
    clauses: dict[str, tuple[bool, str]] = field(default_factory=dict)

    def add(self, name: str, ok: bool, msg: str = ""):
        self.clauses[name] = (bool(ok), msg)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.clauses.values())

    def failures(self) -> list[str]:
        return [k for k, (ok, _) in self.clauses.items() if not ok]

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "clauses": {k: {"passed": ok, "detail": msg} for k, (ok, msg) in self.clauses.items()}}


def _ball_grid(d: int, radius: float, count: int) -> np.ndarray:
    ticks = np.linspace(-radius, radius, count)
    pts = np.array(list(itertools.product(ticks, repeat=d)))
    return pts[np.linalg.norm(pts, axis=1) <= radius + 1e-12]


def _poly_equal(p: Polynomial, q: Polynomial, degree: int | None, exact: bool, tol: float) -> bool:
    if degree is not None:
        p, q = p.truncate_degree(degree), q.truncate_degree(degree)
    if exact:
        return p == q
    return p.allclose(q, tol)


def reversibility_defects(model: LatticeModel, tol: float = 1e-10) -> list[str]:
    """Order-by-order jet form of ``a_gamma(x; eps) = a_{-gamma}(x + gamma; eps)``."""
    exact = model.is_exact()
    bad = []
    for eta in model.hops:
        neg = tuple(-e for e in eta)
        dv = model.displacement(eta)
        for k in range(model.K_a + 1):
            rhs = Polynomial(model.d)
            for m in range(k + 1):
                term = model.a(neg, k - m)
                for _ in range(m):
                    term = term.directional(dv)
                rhs = rhs + term * Fraction(1, math.factorial(m)) if exact else rhs + term * (1.0 / math.factorial(m))
            deg = None if model.jet_degree is None else model.jet_degree - k
            if not _poly_equal(model.a(eta, k), rhs, deg, exact, tol):
                bad.append(f"eta={eta}, order {k}")
    return bad


def validate_hypotheses(model: LatticeModel, sample_radius: float = 0.5, grid_count: int = 21,
                        xi_count: int = 64, tol: float = 1e-10) -> ValidationReport:
    rep = ValidationReport()
    d = model.d
    zero = (0,) * d
    exact = model.is_exact()

    # (a)(ii): sum of leading coefficients vanishes identically; off-site ones nonpositive
    total = Polynomial(d)
    for eta in model.hops:
        total = total + model.a(eta, 0)
    deg = model.jet_degree
    sum_ok = (total.truncate_degree(deg) if deg is not None else total).max_abs() <= (0 if exact else tol)
    rep.add("a_ii_sum", sum_ok, "sum_eta a0_eta(x) = 0" if sum_ok else f"sum_eta a0_eta(x) = {total}")
    grid = _ball_grid(d, sample_radius, grid_count)
    worst = 0.0
    for eta in model.hops:
        if eta == zero:
            continue
        a0 = model.a(eta, 0)
        if a0.is_zero():
            continue
        if a0(zero) > 0:
            worst = max(worst, float(a0(zero)))
        worst = max(worst, float(np.max(a0.evaluate_array(grid))))
    rep.add("a_ii_sign", worst <= tol, f"max a0_eta over grid (eta != 0): {worst:.3g}")

    # (a)(iii): reversibility as order-by-order jet identities
    bad = reversibility_defects(model, tol)
    rep.add("a_iii_reversibility", not bad, "ok" if not bad else "violated at " + "; ".join(bad))

    # (a)(v): hops with strictly negative leading coefficient at 0 span R^d
    vecs = [model.displacement(eta) for eta in model.hops
            if eta != zero and model.a(eta, 0)(zero) < 0]
    rank = np.linalg.matrix_rank(np.array(vecs, dtype=float)) if vecs else 0
    rep.add("a_v_span", rank == d, f"rank {rank} of {d}")

    # (c): t_0(0, xi) > 0 away from xi = 0
    ticks = np.linspace(-math.pi, math.pi, xi_count + 1)
    min_t = math.inf
    max_imag = 0.0
    for xi in itertools.product(ticks, repeat=d):
        if max(abs(v) for v in xi) < 1e-12:
            continue
        val = symbol_t(model, 0, zero, xi)
        min_t = min(min_t, val.real)
        max_imag = max(max_imag, abs(val.imag))
    rep.add("c_symbol_positive", min_t > tol and max_imag <= 1e-9,
            f"min t0(0, xi) on grid = {min_t:.4g}, max |Im| = {max_imag:.2g}")

    # (b)(iii): nondegenerate well at 0
    V0 = model.V(0)
    grad = [g(zero) for g in V0.gradient()]
    Hs = np.array(hessian_at_zero(V0), dtype=float)
    eig = np.linalg.eigvalsh(Hs) if d else np.array([])
    well_ok = V0(zero) == 0 if exact else abs(V0(zero)) <= tol
    well_ok = well_ok and all((g == 0) if exact else abs(g) <= tol for g in grad)
    well_ok = well_ok and bool(np.all(eig > tol))
    vmin = float(np.min(V0.evaluate_array(grid)))
    rep.add("b_iii_well", well_ok and vmin >= -tol,
            f"V0(0)={float(V0(zero)):.3g}, Hessian eigenvalues {np.round(eig, 6).tolist()}, min V0 on grid {vmin:.3g}")
    return rep


# -- normal form -------------------------------------------------------------

@dataclass
class NormalForm:
    B0: list[list]
    A: list[list]
    A_tilde: list[list]
    R: list[list]
    Lambda: list[list]
    lam: list
    C: list[list]
    C_inv: list[list]
    hessian_convention: str  # "2*lambda^2" or "lambda^2"

    def to_json(self) -> dict:
        f = lambda M: [[scalar_to_json(v) for v in row] for row in M]  # noqa: E731
        return {"B0": f(self.B0), "A": f(self.A), "A_tilde": f(self.A_tilde), "R": f(self.R),
                "Lambda": f(self.Lambda), "lambda": [scalar_to_json(v) for v in self.lam],
                "C": f(self.C), "C_inv": f(self.C_inv), "hessian_convention": self.hessian_convention}


def _is_diagonal(M, exact, tol):
    d = len(M)
    return all((M[i][j] == 0) if exact else abs(M[i][j]) <= tol
               for i in range(d) for j in range(d) if i != j)


def transform_model(model: LatticeModel, C, C_inv) -> LatticeModel:
    """Coordinates ``x' = C x``: compose all coefficients with ``C^{-1}``; hop displacements become ``C eta``."""
    hops = {eta: [p.substitute_linear(C_inv) for p in orders] for eta, orders in model.hops.items()}
    potential = [p.substitute_linear(C_inv) for p in model.potential]
    base = model.geometry()
    return LatticeModel(model.d, hops, potential, matmul(C, base), model.jet_degree,
                        (model.name + "-normal") if model.name else "")


def normal_form(model: LatticeModel, ctx: Context | None = None, tol: float = 1e-9):
    """Compute ``C = R B_0^{-1/2}`` and the transformed model with ``B(0) = I``.

    Exact mode requires diagonal ``B_0`` with rational square roots and a diagonal
    ``B_0^{1/2} A B_0^{1/2}`` (so that ``R = I``).
    """
    if ctx is None:
        ctx = EXACT if model.is_exact() else FLOAT
    d = model.d
    zero = (0,) * d
    B0 = matrix_B(model, zero)
    A = hessian_at_zero(model.V(0))
    Bn = np.array(B0, dtype=float)
    An = np.array(A, dtype=float)
    if np.any(np.linalg.eigvalsh(Bn) <= 0):
        raise ModelError("B_0 is not positive definite")
    if np.any(np.linalg.eigvalsh(An) <= 0):
        raise ModelError("Hessian of V_0 at 0 is not positive definite")

    if ctx.exact:
        if not _is_diagonal(B0, True, 0):
            raise ModelError("exact mode needs a diagonal B_0; use float mode")
        roots = [exact_sqrt(B0[i][i]) for i in range(d)]
        if any(r is None for r in roots):
            raise ModelError("exact mode needs rational square roots of B_0")
        Bh = [[roots[i] if i == j else Fraction(0) for j in range(d)] for i in range(d)]
        Bmh = [[1 / roots[i] if i == j else Fraction(0) for j in range(d)] for i in range(d)]
        At = matmul(matmul(Bh, A), Bh)
        if not _is_diagonal(At, True, 0):
            raise ModelError("exact mode needs B_0^{1/2} A B_0^{1/2} diagonal; use float mode")
        R = _identity(d, Fraction(1))
        Lam = At
    else:
        w, Q = np.linalg.eigh(Bn)
        Bh_n = Q @ np.diag(np.sqrt(w)) @ Q.T
        Bmh_n = Q @ np.diag(1 / np.sqrt(w)) @ Q.T
        At_n = Bh_n @ An @ Bh_n
        At_n = 0.5 * (At_n + At_n.T)
        mu, P = np.linalg.eigh(At_n)
        R_n = P.T
        if np.linalg.det(R_n) < 0:
            R_n[0] *= -1
        Lam_n = R_n @ At_n @ R_n.T
        Bh, Bmh, At, R, Lam = (m.tolist() for m in (Bh_n, Bmh_n, At_n, R_n, Lam_n))
        if not np.allclose(R_n @ R_n.T, np.eye(d), atol=tol):
            raise ModelError("R is not orthogonal")
        if not _is_diagonal(Lam, False, tol * max(1.0, np.abs(Lam_n).max())):
            raise ModelError("Lambda is not diagonal")
    C = matmul(R, Bmh)
    C_inv = matmul(Bh, transpose(R))
    transformed = transform_model(model, C, C_inv)

    # lambda_nu from the x_nu^2 coefficient of the transformed V_0
    Q = quadratic_form_coeffs(transformed.V(0))
    if not _is_diagonal(Q, ctx.exact, tol):
        raise ModelError("transformed quadratic potential is not diagonal")
    lam = []
    for nu in range(d):
        q = Q[nu][nu]
        if ctx.exact:
            r = exact_sqrt(q)
            if r is None:
                raise ModelError(f"lambda_{nu + 1}^2 = {q} has no rational root; use float mode")
            lam.append(r)
        else:
            lam.append(math.sqrt(float(q)))
    # cross-check the Hessian convention of Lambda
    lam2 = [float(v) ** 2 for v in lam]
    diag = [float(Lam[i][i]) for i in range(d)]
    if all(abs(a - 2 * b) <= tol * max(1.0, a) for a, b in zip(diag, lam2)):
        conv = "2*lambda^2"
    elif all(abs(a - b) <= tol * max(1.0, a) for a, b in zip(diag, lam2)):
        conv = "lambda^2"
    else:
        raise ModelError(f"Lambda = {diag} matches neither 2*lambda^2 nor lambda^2 for lambda^2 = {lam2}")
    B_check = matrix_B(transformed, zero)
    if not np.allclose(np.array(B_check, dtype=float), np.eye(d), atol=tol):
        raise ModelError(f"transformed B(0) = {B_check} is not the identity")
    nf = NormalForm(B0, A, At, R, Lam, lam, C, C_inv, conv)
    return nf, transformed


def frequencies(model: LatticeModel, ctx: Context | None = None, tol: float = 1e-9) -> list:
    """``lambda_nu`` of a model already in normal form (``B(0) = I``, diagonal quadratic potential)."""
    if ctx is None:
        ctx = EXACT if model.is_exact() else FLOAT
    d = model.d
    B = np.array(matrix_B(model, (0,) * d), dtype=float)
    if not np.allclose(B, np.eye(d), atol=tol):
        raise ModelError("model is not in normal form: B(0) != I")
    Q = quadratic_form_coeffs(model.V(0))
    if not _is_diagonal(Q, ctx.exact, tol):
        raise ModelError("model is not in normal form: quadratic potential not diagonal")
    lam = []
    for nu in range(d):
        if ctx.exact:
            r = exact_sqrt(Q[nu][nu])
            if r is None:
                raise ModelError("irrational frequency in exact mode; use float mode")
            lam.append(r)
        else:
            lam.append(math.sqrt(float(Q[nu][nu])))
    if any(float(v) <= 0 for v in lam):
        raise ModelError("nonpositive frequency")
    return lam


def harmonic_shift(model: LatticeModel):
    """``V_1(0) + t_1(0, 0)``; the imaginary part of ``t_1(0,0)`` vanishes for integer hops."""
    zero = (0,) * model.d
    t1 = sum((model.a(eta, 1)(zero) for eta in model.hops), 0)
    return model.V(1)(zero) + t1
