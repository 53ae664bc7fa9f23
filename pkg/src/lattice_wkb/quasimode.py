"""Numeric quasimodes on a finite lattice box and the checks run against them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .eikonal import GluedPhase, radial_cutoff
from .hermite import HarmonicLevel
from .model import LatticeModel
from .polynomial import Polynomial
from .series import PolySeries, PuiseuxScalar


class VerificationError(RuntimeError):
    pass


# -- change of variables -------------------------------------------------------

@dataclass
class QuasimodeExpansion:
    """``u_hat(x; eps) = sum_l eps^l u_hat_l(x)`` obtained from ``psi(x / sqrt(eps); eps)``.

    ``terms[(l2, k2)]`` holds the part of ``u_hat_{l2/2}`` coming from ``psi_{k2/2}``; the
    split lets a quasimode be assembled from a prefix of the ``psi`` series.
    """

    d: int
    terms: dict
    floor2: int
    eigenvalue: PuiseuxScalar | None = None
    psi_trunc2: int | None = None

    def uhat(self, l2: int, max_k2: int | None = None) -> Polynomial:
        out = Polynomial(self.d)
        for (l, k), p in self.terms.items():
            if l == l2 and (max_k2 is None or k <= max_k2):
                out = out + p
        return out

    def orders(self) -> list[int]:
        return sorted({l for l, _ in self.terms})

    def half_integer_orders(self) -> list[int]:
        return [l for l in self.orders() if l % 2 and not self.uhat(l).is_zero()]


def to_x_variables(psi: PolySeries, level: HarmonicLevel | None = None,
                   eigenvalue: PuiseuxScalar | None = None) -> QuasimodeExpansion:
    """``eps^k c y^beta -> eps^{k - |beta|/2} c x^beta``, regrouped by ``l = k - |beta|/2``."""
    d = psi.d
    terms: dict = {}
    for k2, p in psi.coeffs.items():
        for beta, c in p.terms.items():
            l2 = k2 - sum(beta)
            key = (l2, k2)
            terms[key] = terms.get(key, Polynomial(d)) + Polynomial.monomial(beta, c)
    floor2 = min((l for l, _ in terms), default=0)
    if level is not None:
        top = max(sum(a) for a in level.members)
        if floor2 < -top:
            raise VerificationError(f"floor order {floor2}/2 below -max|alpha|/2 = {-top}/2")
    for (l2, _), p in terms.items():
        if not p.is_zero() and p.low_degree() < max(-l2, 0):
            raise VerificationError(f"u_hat_{l2}/2 has a monomial of degree {p.low_degree()} < {max(-l2, 0)}")
    return QuasimodeExpansion(d, terms, floor2, eigenvalue, psi.trunc2)


# -- lattice box and Hamiltonian ---------------------------------------------------

@dataclass
class LatticeBox:
    d: int
    eps: float
    L: float
    x0: tuple = None
    axes: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.x0 is None:
            self.x0 = (0.0,) * self.d
        self.axes = []
        for nu in range(self.d):
            lo = math.ceil((-self.L - self.x0[nu]) / self.eps - 1e-9)
            hi = math.floor((self.L - self.x0[nu]) / self.eps + 1e-9)
            self.axes.append(np.arange(lo, hi + 1))

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def indices(self) -> np.ndarray:
        """Integer lattice coordinates of all sites, C order."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def points(self) -> np.ndarray:
        return self.indices() * self.eps + np.asarray(self.x0, dtype=float)


def _coeff_values(polys: list[Polynomial], eps: float, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0])
    for k, p in enumerate(polys):
        if not p.is_zero():
            out += eps ** k * p.to_float().evaluate_array(X)
    return out


def assemble_hamiltonian(model: LatticeModel, eps: float, box: LatticeBox, tol: float = 1e-10,
                         check_symmetry: bool = True) -> scipy.sparse.csr_matrix:
    """``(H u)(x) = sum_eta a_eta(x; eps) u(x + eps eta) + V(x; eps) u(x)`` with Dirichlet truncation."""
    if model.C is not None and not np.allclose(np.array(model.C, dtype=float), np.eye(model.d)):
        raise VerificationError("lattice assembly needs an untransformed model (C = identity)")
    idx = box.indices()
    X = box.points()
    n = box.size
    shape = box.shape
    lo = np.array([a[0] for a in box.axes])
    rows, cols, vals = [], [], []
    site = np.arange(n)
    for eta, orders in model.hops.items():
        a = _coeff_values(orders, eps, X)
        if eta == (0,) * model.d:
            a = a + _coeff_values(model.potential, eps, X)
        tgt = idx + np.asarray(eta)
        inside = np.all((tgt >= lo) & (tgt < lo + np.array(shape)), axis=1)
        flat = np.ravel_multi_index(tuple((tgt[inside] - lo).T), shape)
        keep = a[inside] != 0
        rows.append(site[inside][keep])
        cols.append(flat[keep])
        vals.append(a[inside][keep])
    H = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(n, n)).tocsr()
    if check_symmetry:
        D = (H - H.T).tocoo()
        scale = max(1.0, abs(H).max())
        if D.nnz and np.max(np.abs(D.data)) > tol * scale:
            raise VerificationError(f"lattice matrix asymmetric (max defect {np.max(np.abs(D.data)):.3g})")
    return H


def reference_spectrum(H, n_low: int, d: int = 1, banded_cap: int = 200_000, dense_cap: int = 10_000,
                       sparse_cap: int = 400_000, dense_below: int = 1500) -> np.ndarray:
    """``n_low`` smallest eigenvalues of a symmetric lattice matrix.

    1D uses a banded solver. Otherwise small matrices go to a dense solver and larger
    ones to shift-invert Lanczos around 0 (the spectrum is bounded below by 0 for the
    one-well models here), which is much faster than dense well below ``dense_cap``.
    """
    n = H.shape[0]
    n_low = min(n_low, n)
    H = H.tocsr()
    if d == 1:
        if n > banded_cap:
            raise VerificationError(f"{n} sites exceed the banded cap {banded_cap}")
        coo = H.tocoo()
        bw = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
        ab = np.zeros((bw + 1, n))
        for k in range(bw + 1):
            diag = H.diagonal(k)
            ab[bw - k, k:] = diag
        return scipy.linalg.eig_banded(ab, lower=False, eigvals_only=True, select="i",
                                       select_range=(0, n_low - 1))
    if n <= min(dense_cap, dense_below) or n <= n_low + 1:
        return scipy.linalg.eigh(H.toarray(), eigvals_only=True, subset_by_index=(0, n_low - 1))
    if n > sparse_cap:
        raise VerificationError(f"{n} sites exceed the sparse cap {sparse_cap}")
    w = scipy.sparse.linalg.eigsh(H.tocsc(), k=n_low, sigma=0.0, which="LM", return_eigenvectors=False)
    return np.sort(w)


# -- quasimode assembly --------------------------------------------------------------

def assemble_quasimode(qexp: QuasimodeExpansion, M_trunc2: int, phase: GluedPhase, cutoff: tuple,
                       box: LatticeBox, C=None) -> np.ndarray:
    """``v(x) = [sum eps^l u_hat_l(x)] k(x) exp(-phi~(x)/eps)`` at the sites of ``box``.

    Only ``psi`` orders up to ``M_trunc2/2`` enter. For a normal-form map ``C`` the
    expansion and phase are evaluated at ``C x`` and scaled by ``|det C|^{1/2}``.
    """
    k_in, k_out = cutoff
    if not 0 < k_in < k_out <= phase.r_in + 1e-12:
        raise VerificationError(f"cutoff radii {cutoff} must lie inside the phase's polynomial region r_in = {phase.r_in}")
    eps = box.eps
    X = box.points()
    scale = 1.0
    if C is not None:
        Cm = np.asarray(C, dtype=float)
        X = X @ Cm.T
        scale = math.sqrt(abs(np.linalg.det(Cm)))
    amp = np.zeros(X.shape[0])
    for l2 in qexp.orders():
        u = qexp.uhat(l2, M_trunc2)
        if not u.is_zero():
            amp += eps ** (l2 / 2) * u.to_float().evaluate_array(X)
    chi = radial_cutoff(X, k_in, k_out)
    return scale * amp * chi * np.exp(-phase(X) / eps)


def interior_mask(box: LatticeBox, radius: float, reach: int, C=None) -> np.ndarray:
    X = box.points()
    if C is not None:
        X = X @ np.asarray(C, dtype=float).T
    return np.linalg.norm(X, axis=1) <= radius - reach * box.eps


def residual_report(H, v: np.ndarray, eps_E: float, mask: np.ndarray | None = None) -> dict:
    r = H @ v - eps_E * v
    nv = float(np.linalg.norm(v))
    out = {"norm_v": nv, "r_global": float(np.linalg.norm(r)) / nv}
    if mask is not None:
        out["r_interior"] = float(np.linalg.norm(r[mask])) / nv
        out["interior_sites"] = int(mask.sum())
    return out


def scaling_fit(eps, values) -> dict:
    """Least-squares slope of ``log(value)`` against ``log(eps)``."""
    eps = np.asarray(eps, dtype=float)
    vals = np.abs(np.asarray(values, dtype=float))
    if len(eps) < 3:
        raise ValueError("need at least three grid points")
    if np.any(vals <= 0):
        return {"slope": math.nan, "r2": math.nan, "monotone": False, "values": vals.tolist(),
                "eps": eps.tolist(), "zero_values": True}
    x, y = np.log(eps), np.log(vals)
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    order = np.argsort(eps)
    monotone = bool(np.all(np.diff(vals[order]) >= 0) or np.all(np.diff(vals[order]) <= 0))
    return {"slope": float(slope), "r2": r2, "monotone": monotone, "values": vals.tolist(),
            "eps": eps.tolist()}


def gaussian_mass(lam, eps: float) -> float:
    """``int exp(-sum lambda_nu x_nu^2 / eps) dx``."""
    return float(np.prod([math.sqrt(math.pi * eps / float(l)) for l in lam]))


def gram_report(vs: list[np.ndarray], eps: float, d: int, mass: float = 1.0) -> dict:
    """``eps^d <v_j, v_k> / mass`` and its deviation from the identity."""
    V = np.stack(vs, axis=1)
    G = (eps ** d) * (V.T @ V) / mass
    dev = float(np.max(np.abs(G - np.eye(len(vs)))))
    return {"gram": G.tolist(), "deviation": dev, "mass": mass}
