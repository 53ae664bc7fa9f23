"""Riesz projection, the pencil ``(F, F^G)`` and eigenvalue/eigenvector series.

The projection onto the perturbed group of a harmonic level ``E`` is

    Pi_E = -(1/2 pi i) oint (G - z)^{-1} dz,
    (G - z)^{-1} = sum_k (-R_0 G')^k R_0,   R_0 = (G_0 - z)^{-1},  G' = sum_{j>=1/2} eps^j G_j.

In the Hermite basis ``R_0`` is diagonal, so every chain is a sum over index paths
carrying a product of factors ``(e_beta - z)^{-1}``. With ``t = z - E`` those factors are
``-1/t`` on the level and a geometric series in ``t`` elsewhere; the contour integral is
the coefficient of ``t^{-1}``. Chains are accumulated by a dynamic programme over the
order, so no chain is enumerated twice.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from .conjugation import ConjugatedExpansion
from .hermite import HarmonicLevel, HermiteBasis, WeightExpansion, inner_k
from .model import harmonic_shift
from .polynomial import Polynomial
from .series import PolySeries, PuiseuxScalar

log = logging.getLogger(__name__)


class SpectralError(RuntimeError):
    pass


@dataclass
class SpectralProblem:
    """Conjugated expansion plus Hermite basis and weights, with cached matrix elements."""

    expansion: ConjugatedExpansion
    weights: WeightExpansion
    basis: HermiteBasis = None
    _images: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.basis is None:
            shift = harmonic_shift(self.expansion.model)
            lam = self.expansion.solution.lam
            if not self.expansion.ctx.exact:
                lam = [float(l) for l in lam]
                shift = float(shift)
            self.basis = HermiteBasis(list(lam), "monic", shift)

    @property
    def exact(self) -> bool:
        return self.expansion.ctx.exact

    @property
    def N2(self) -> int:
        return self.expansion.N2

    @property
    def d(self) -> int:
        return self.expansion.d

    def image(self, r: int, beta) -> dict:
        """Hermite coefficients of ``G_{r/2} h_beta``."""
        key = (r, tuple(beta))
        if key not in self._images:
            p = self.expansion.apply2(r, self.basis.monic(beta))
            self._images[key] = self.basis.to_hermite(p)
        return self._images[key]

    def apply_G(self, p: PolySeries, trunc2: int | None = None) -> PolySeries:
        out = self.expansion.apply_series(p)
        return out if trunc2 is None else out.truncate(trunc2)

    def G_series(self, u: Polynomial, trunc2: int | None = None) -> PolySeries:
        T = self.N2 if trunc2 is None else trunc2
        return PolySeries({r: self.expansion.apply2(r, u) for r in range(T + 1)}, T, d=self.d)

    def inner(self, p, q, trunc2: int | None = None) -> PuiseuxScalar:
        return inner_k(p, q, self.weights, trunc2)


# -- Laurent arithmetic in t = z - E --------------------------------------

def _laurent_factor(L: dict, delta, on_level: bool, top: int, exact: bool) -> dict:
    """Multiply ``L`` by ``(e_beta - z)^{-1}``; ``delta = e_beta - E``; powers above ``top`` dropped."""
    if on_level:
        return {n - 1: -c for n, c in L.items()}
    inv = Fraction(1) / delta if exact else 1.0 / delta
    out: dict = {}
    for n, c in L.items():
        term = c * inv
        k = n
        while k <= top:
            out[k] = out.get(k, 0) + term
            term = term * inv
            k += 1
    return out


def _laurent_add(A: dict, B: dict, scale=1) -> None:
    for n, c in B.items():
        A[n] = A.get(n, 0) + c * scale


def project_hermite(problem: SpectralProblem, level: HarmonicLevel, coeffs: dict, N2: int) -> dict[int, dict]:
    """``Pi_E`` applied to ``sum_beta c_beta h_beta``; returns ``{order2: {beta: coefficient}}``."""
    if N2 > problem.N2:
        raise SpectralError(f"projection order {Fraction(N2, 2)} exceeds expansion order {problem.expansion.N}")
    exact = problem.exact
    E = level.E
    members = set(level.members)
    basis = problem.basis
    tol = level.tol

    def factor(L, beta, top):
        e = basis.energy(beta)
        on = beta in members
        if not on and not exact and abs(e - E) <= 2 * max(tol, 1e-12):
            raise SpectralError(f"index {beta} has energy {e} indistinguishable from E = {E} but is not in I_E")
        return _laurent_factor(L, e - E, on, top, exact)

    T: dict[int, dict] = {}
    top0 = N2
    T[0] = {}
    for beta, c in coeffs.items():
        beta = tuple(beta)
        T[0][beta] = factor({0: c}, beta, top0)
    for o in range(1, N2 + 1):
        top = N2 - o
        acc: dict[tuple, dict] = {}
        for r in range(1, o + 1):
            src = T.get(o - r)
            if not src:
                continue
            for beta, L in src.items():
                if not L:
                    continue
                for gamma, g in problem.image(r, beta).items():
                    tgt = acc.setdefault(gamma, {})
                    _laurent_add(tgt, {n: c for n, c in L.items() if n <= top}, -g)
        T[o] = {gamma: factor(L, gamma, top) for gamma, L in acc.items()}
    out: dict[int, dict] = {}
    for o, states in T.items():
        res = {}
        for beta, L in states.items():
            c = L.get(-1, 0)
            if c != 0 and (exact or abs(c) > 1e-15):
                res[beta] = -c
        if res:
            out[o] = res
    return out


def riesz_project(problem: SpectralProblem, level: HarmonicLevel, target, N2: int | None = None) -> PolySeries:
    """``Pi_E`` applied to ``h_alpha`` (a multi-index), a polynomial or a polynomial series.

    A series ``p = sum eps^j p_j`` is projected termwise, each ``p_j`` through order ``N2 - j``.
    """
    N2 = problem.N2 if N2 is None else N2
    basis = problem.basis
    if isinstance(target, PolySeries):
        out = PolySeries({}, N2 if target.trunc2 is None else min(N2, target.trunc2), d=problem.d)
        for j, pj in target.coeffs.items():
            if j > out.trunc2:
                continue
            part = riesz_project(problem, level, pj, out.trunc2 - j)
            out = out + PolySeries(part.coeffs, None, d=problem.d).shift(j)
        return out.truncate(out.trunc2)
    if isinstance(target, Polynomial):
        coeffs = basis.to_hermite(target)
    else:
        coeffs = {tuple(target): Fraction(1) if problem.exact else 1.0}
    h = project_hermite(problem, level, coeffs, N2)
    return PolySeries({o: basis.from_hermite(c) for o, c in h.items()}, N2, d=problem.d)


def _series_close(a, b, trunc2, exact, tol=1e-9) -> bool:
    return a.equals_through(b, trunc2, None if exact else tol)


def projector_checks(problem: SpectralProblem, level: HarmonicLevel, N2: int | None = None,
                     test_set=None, pairs=None) -> dict:
    """Idempotency, commutation with ``G``, symmetry and rank of ``Pi_E`` through order ``N2``."""
    N2 = problem.N2 if N2 is None else N2
    exact = problem.exact
    d = problem.d
    if test_set is None:
        from .polynomial import monomials_up_to
        test_set = monomials_up_to(d, 3)[:10]
    test_set = [tuple(a) for a in test_set]
    report = {"N2": N2, "idempotent": [], "commutes": [], "symmetric": [], "rank_ok": None}
    proj = {}
    for a in test_set:
        f = riesz_project(problem, level, a, N2)
        proj[a] = f
        ff = riesz_project(problem, level, f, N2)
        report["idempotent"].append(_series_close(ff, f, N2, exact))
        h = problem.basis.monic(a)
        lhs = problem.apply_G(f, N2)
        rhs = riesz_project(problem, level, problem.G_series(h, N2), N2)
        report["commutes"].append(_series_close(lhs, rhs, N2, exact))
    if pairs is None:
        pairs = [(test_set[i], test_set[(i + 1) % len(test_set)]) for i in range(len(test_set))]
    for p, q in pairs:
        P = p if isinstance(p, Polynomial) else problem.basis.monic(p)
        Q = q if isinstance(q, Polynomial) else problem.basis.monic(q)
        PiP = proj.get(p) if not isinstance(p, Polynomial) and p in proj else riesz_project(problem, level, P, N2)
        PiQ = proj.get(q) if not isinstance(q, Polynomial) and q in proj else riesz_project(problem, level, Q, N2)
        a = problem.inner(P, PiQ, N2)
        b = problem.inner(PiP, Q, N2)
        report["symmetric"].append(_series_close(a, b, N2, exact))
    # rank: leading terms of Pi h_alpha (alpha in I_E) are the independent h_alpha, and every
    # other projected test vector lies in their span through order N2
    lead = [riesz_project(problem, level, a, N2).get(0) for a in level.members]
    lead_ok = all((l == problem.basis.monic(a)) if exact else l.allclose(problem.basis.monic(a), 1e-9)
                  for l, a in zip(lead, level.members))
    pencil = build_pencil(problem, level, N2)
    Finv = matseries_inverse(pencil.F_series(), N2, exact)
    span_ok = []
    for a in test_set:
        f = proj[a]
        rhs = {}
        for i, fi in enumerate(pencil.f):
            s = problem.inner(fi, f, N2)
            for k, c in s.coeffs.items():
                rhs.setdefault(k, _zeros(pencil.m, 1, exact))[i, 0] = c
        coef = matseries_mul(Finv, rhs, N2, exact)
        recon = PolySeries({}, N2, d=d)
        for k, M in coef.items():
            for i, fi in enumerate(pencil.f):
                c = M[i, 0]
                if c != 0:
                    recon = recon + fi.shift(k) * c
        span_ok.append(_series_close(recon.truncate(N2), f, N2, exact))
    report["rank"] = level.m if lead_ok and all(span_ok) else None
    report["rank_ok"] = bool(lead_ok and all(span_ok))
    report["span"] = span_ok
    report["ok"] = (all(report["idempotent"]) and all(report["commutes"]) and all(report["symmetric"])
                    and report["rank_ok"])
    return report


# -- matrix series ------------------------------------------------------------

def _zeros(n, m, exact):
    if exact:
        Z = np.empty((n, m), dtype=object)
        Z[...] = Fraction(0)
        return Z
    return np.zeros((n, m))


def _eye(n, exact):
    Z = _zeros(n, n, exact)
    for i in range(n):
        Z[i, i] = Fraction(1) if exact else 1.0
    return Z


def _is_zero_matrix(M, exact, tol=1e-10) -> bool:
    if exact:
        return all(c == 0 for c in M.flat)
    return bool(np.max(np.abs(M)) <= tol) if M.size else True


def matseries_mul(A: dict, B: dict, trunc2: int, exact: bool) -> dict:
    out: dict = {}
    for i, Ai in A.items():
        for j, Bj in B.items():
            if i + j > trunc2:
                continue
            P = Ai.dot(Bj)
            out[i + j] = out[i + j] + P if (i + j) in out else P
    return {k: v for k, v in out.items() if not _is_zero_matrix(v, exact, 0.0)}


def _inverse_matrix(M, exact):
    if exact:
        inv = sympy.Matrix(M.tolist()).inv()
        out = _zeros(*M.shape, exact)
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                v = inv[i, j]
                out[i, j] = Fraction(int(v.p), int(v.q))
        return out
    return np.linalg.inv(M)


def matseries_inverse(A: dict, trunc2: int, exact: bool) -> dict:
    """Inverse of a matrix series with invertible order-0 term."""
    if 0 not in A:
        raise SpectralError("order-0 block is singular")
    A0inv = _inverse_matrix(A[0], exact)
    X = {0: A0inv}
    for s in range(1, trunc2 + 1):
        acc = None
        for q in range(1, s + 1):
            if q in A and (s - q) in X:
                P = A[q].dot(X[s - q])
                acc = P if acc is None else acc + P
        if acc is not None:
            Xs = -A0inv.dot(acc)
            if not _is_zero_matrix(Xs, exact, 0.0):
                X[s] = Xs
    return X


# -- pencil -------------------------------------------------------------------

@dataclass
class PencilSeries:
    level: HarmonicLevel
    f: list
    F: list
    FG: list
    trunc2: int
    exact: bool

    @property
    def m(self) -> int:
        return len(self.f)

    def _series(self, mat) -> dict:
        out: dict = {}
        for i in range(self.m):
            for j in range(self.m):
                for k, c in mat[i][j].coeffs.items():
                    out.setdefault(k, _zeros(self.m, self.m, self.exact))[i, j] = c
        return out

    def F_series(self) -> dict:
        return self._series(self.F)

    def FG_series(self) -> dict:
        return self._series(self.FG)

    def half_integer_entries(self) -> list:
        bad = []
        for name, mat in (("F", self.F), ("FG", self.FG)):
            for i in range(self.m):
                for j in range(self.m):
                    for k, c in mat[i][j].half_integer_coeffs().items():
                        bad.append((name, i, j, k, c))
        return bad

    def to_json(self) -> dict:
        from .serialize import series_to_json
        return {"F": [[series_to_json(s) for s in row] for row in self.F],
                "FG": [[series_to_json(s) for s in row] for row in self.FG],
                "trunc2": self.trunc2}


def build_pencil(problem: SpectralProblem, level: HarmonicLevel, N2: int | None = None,
                 tol: float = 1e-9) -> PencilSeries:
    N2 = problem.N2 if N2 is None else N2
    f = [riesz_project(problem, level, a, N2) for a in level.members]
    Gf = [problem.apply_G(fi, N2) for fi in f]
    m = len(f)
    F = [[None] * m for _ in range(m)]
    FG = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            F[i][j] = problem.inner(f[i], f[j], N2)
            FG[i][j] = problem.inner(f[i], Gf[j], N2)
    for i in range(m):
        for j in range(i):
            for M, name in ((F, "F"), (FG, "F^G")):
                if not _series_close(M[i][j], M[j][i], N2, problem.exact, tol):
                    raise SpectralError(f"{name} not symmetric at ({i},{j}): {M[i][j]} vs {M[j][i]}")
    return PencilSeries(level, f, F, FG, N2, problem.exact)


# -- order-by-order splitting ---------------------------------------------------

@dataclass
class Branch:
    """One eigenvalue series ``E_j(eps)`` with the pencil coordinates of its eigenvector."""

    eigenvalue: PuiseuxScalar
    vector: dict            # order2 -> (m x 1) coordinates in the basis f_i
    vector_trunc2: int
    status: str             # "split" or "unresolved"
    multiplicity: int = 1
    psi: PolySeries | None = None
    float_fallback: bool = False

    def to_json(self) -> dict:
        from .serialize import series_to_json
        return {"eigenvalue": series_to_json(self.eigenvalue), "status": self.status,
                "multiplicity": self.multiplicity, "vector_trunc2": self.vector_trunc2,
                "float_fallback": self.float_fallback}


def _scalar_part(M, exact, tol):
    """``s`` if ``M = s I`` (to tolerance), else ``None``."""
    n = M.shape[0]
    s = M[0, 0]
    D = M - _eye(n, exact) * s
    return s if _is_zero_matrix(D, exact, tol) else None


def _exact_eigen(M):
    """Eigen-decomposition of a rational matrix; ``None`` if an eigenvalue is irrational."""
    S = sympy.Matrix(M.tolist())
    groups = []
    for val, mult, vecs in sorted(S.eigenvects(), key=lambda t: sympy.re(t[0])):
        if not val.is_rational or len(vecs) != mult:
            return None
        cols = [[Fraction(int(sympy.Rational(v).p), int(sympy.Rational(v).q)) for v in vec] for vec in vecs]
        groups.append((Fraction(int(val.p), int(val.q)), cols))
    return groups


def _float_eigen(M, tol):
    w, V = np.linalg.eig(np.asarray(M, dtype=float))
    order = np.argsort(w.real)
    w, V = w.real[order], V.real[:, order]
    groups = []
    for i, val in enumerate(w):
        if groups and abs(val - groups[-1][0]) <= tol * (1 + abs(val)):
            groups[-1][1].append(list(V[:, i]))
        else:
            groups.append([val, [list(V[:, i])]])
    return [(g[0], g[1]) for g in groups]


def _to_float_series(K: dict) -> dict:
    return {k: np.asarray(v, dtype=float) for k, v in K.items()}


def _split(K: dict, T: int, S: dict, S_trunc: int, exact: bool, tol: float, prefix: dict,
           fallback: bool) -> list[Branch]:
    """Recursive block diagonalisation of ``K(eps)`` (leading term scalar)."""
    p = next(iter(K.values())).shape[0] if K else S[0].shape[1]
    values = dict(prefix)
    r = None
    for o in range(0, T + 1):
        if o not in K:
            continue
        s = _scalar_part(K[o], exact, tol)
        if s is None:
            r = o
            break
        if s != 0 and (exact or abs(s) > tol):
            values[o] = s
    if r is None:
        status = "split" if p == 1 else "unresolved"
        branches = []
        for col in range(p):
            vec = {k: M[:, col:col + 1] for k, M in S.items()}
            branches.append(Branch(PuiseuxScalar(values, T), vec, S_trunc, status, p, float_fallback=fallback))
        return branches
    Kr = K[r]
    groups = _exact_eigen(Kr) if exact else _float_eigen(Kr, tol)
    if groups is None:
        log.warning("irrational eigenvalues at order %s; continuing this block in float mode", Fraction(r, 2))
        exact, fallback = False, True
        K = _to_float_series(K)
        S = _to_float_series(S)
        values = {k: float(v) for k, v in values.items()}
        Kr = K[r]
        groups = _float_eigen(Kr, tol)
    cols = [c for _, vecs in groups for c in vecs]
    P = _zeros(p, p, exact)
    for j, c in enumerate(cols):
        for i in range(p):
            P[i, j] = c[i]
    Pinv = _inverse_matrix(P, exact)
    Kt = {k: Pinv.dot(M).dot(P) for k, M in K.items() if k >= r}
    sizes = [len(vecs) for _, vecs in groups]
    bounds = np.cumsum([0] + sizes)
    blocks = [slice(bounds[i], bounds[i + 1]) for i in range(len(sizes))]
    mu = [g[0] for g in groups]
    block_of = np.zeros(p, dtype=int)
    for b, sl in enumerate(blocks):
        block_of[sl] = b
    # T(eps) = I + sum_s eps^{s/2} X_s, X_s off-block, with K T = T Lambda
    X: dict[int, object] = {}
    Lam: dict[int, object] = {r: Kt[r]}
    for s in range(1, T - r + 1):
        W = Kt.get(r + s, _zeros(p, p, exact)).copy()
        for q in range(1, s):
            if (r + q) in Kt and (s - q) in X:
                W = W + Kt[r + q].dot(X[s - q])
            if q in X and (r + s - q) in Lam:
                W = W - X[q].dot(Lam[r + s - q])
        Ls = _zeros(p, p, exact)
        Xs = _zeros(p, p, exact)
        for i in range(p):
            for j in range(p):
                bi, bj = block_of[i], block_of[j]
                if bi == bj:
                    Ls[i, j] = W[i, j]
                else:
                    Xs[i, j] = -W[i, j] / (mu[bi] - mu[bj])
        Lam[r + s] = Ls
        if not _is_zero_matrix(Xs, exact, 0.0):
            X[s] = Xs
    Tser = {0: _eye(p, exact)}
    Tser.update(X)
    new_trunc = min(S_trunc, T - r)
    SP = {k: M.dot(P) for k, M in S.items()}
    ST = matseries_mul(SP, Tser, new_trunc, exact)
    out = []
    for b, sl in enumerate(blocks):
        Kb = {k: M[sl, sl] for k, M in Lam.items() if not _is_zero_matrix(M[sl, sl], exact, 0.0)}
        Sb = {k: M[:, sl] for k, M in ST.items()}
        if 0 not in Sb:
            Sb[0] = _zeros(S[0].shape[0], sl.stop - sl.start, exact)
        out.extend(_split(Kb, T, Sb, new_trunc, exact, tol, values, fallback))
    return out


def pencil_eigen(pencil: PencilSeries, problem: SpectralProblem | None = None, tol: float = 1e-9) -> list[Branch]:
    """Eigenvalue series of ``F^G u = E F u`` by recursive splitting of ``K = F^{-1} F^G``."""
    exact = pencil.exact
    T = pencil.trunc2
    F = pencil.F_series()
    K = matseries_mul(matseries_inverse(F, T, exact), pencil.FG_series(), T, exact)
    if 0 not in K or _scalar_part(K[0], exact, tol) is None:
        raise SpectralError("leading pencil block is not a multiple of the identity")
    S = {0: _eye(pencil.m, exact)}
    branches = _split(K, T, S, T, exact, tol, {}, False)
    for br in branches:
        psi = PolySeries({}, br.vector_trunc2, d=pencil.f[0].d)
        for k, v in br.vector.items():
            for i, fi in enumerate(pencil.f):
                c = v[i, 0]
                if c != 0:
                    psi = psi + fi.shift(k) * c
        br.psi = psi.truncate(br.vector_trunc2)
    return branches


def pencil_residual(pencil: PencilSeries, branch: Branch) -> dict:
    """Coefficients of ``(F^G - E F) u`` through the branch's vector truncation."""
    exact = pencil.exact and not branch.float_fallback
    T = branch.vector_trunc2
    F = pencil.F_series()
    FG = pencil.FG_series()
    if not exact:
        F, FG = _to_float_series(F), _to_float_series(FG)
    Eu = {k: _eye(pencil.m, exact) * c for k, c in branch.eigenvalue.coeffs.items()}
    EF = matseries_mul(Eu, F, T, exact)
    A = dict(FG)
    for k, M in EF.items():
        A[k] = A[k] - M if k in A else -M
    return matseries_mul(A, branch.vector, T, exact)


def eigenvector_degree_ok(branch: Branch, level: HarmonicLevel) -> bool:
    top = max(sum(a) for a in level.members)
    return all(c.degree() <= top + k for k, c in branch.psi.coeffs.items())


# -- float cross-check through M = B F^G B --------------------------------------

def m_matrix(pencil: PencilSeries, basis: HermiteBasis):
    """``M = B F^G B`` with ``B = F^{-1/2}`` in the orthonormalised basis (float only).

    Returns a dict ``order2 -> (m x m) float array``.
    """
    m = pencil.m
    T = pencil.trunc2
    scale = np.array([1.0 / math.sqrt(float(basis.gram(a))) for a in pencil.level.members])
    D = np.diag(scale)
    F = {k: D @ np.asarray(v, dtype=float) @ D for k, v in pencil.F_series().items()}
    FG = {k: D @ np.asarray(v, dtype=float) @ D for k, v in pencil.FG_series().items()}
    if not np.allclose(F.get(0, np.zeros((m, m))), np.eye(m), atol=1e-10):
        raise SpectralError("leading Gram block is not the identity in the orthonormal basis")
    X = {k: v for k, v in F.items() if k > 0}
    B = {0: np.eye(m)}
    power = {0: np.eye(m)}
    n = 1
    while X and n * min(X) <= T:
        power = matseries_mul(power, X, T, False)
        c = float(math.prod((-0.5 - i) / (i + 1) for i in range(n)))
        for k, v in power.items():
            B[k] = B.get(k, np.zeros((m, m))) + c * v
        n += 1
    return matseries_mul(matseries_mul(B, FG, T, False), B, T, False)


def evaluate_matrix_series(M: dict, eps: float) -> np.ndarray:
    return sum(np.asarray(v, dtype=float) * eps ** (k / 2) for k, v in M.items())

