"""Taylor-jet solution of the lattice eikonal equation and the glued phase.

For a model in normal form the phase ``phi`` solves

    sum_eta a0_eta(x) cosh((C eta) . grad phi(x)) + V_0(x) = 0,   phi(0) = 0,

with ``phi = phi_0 + phi_1 + ...``, ``phi_k`` homogeneous of degree ``k + 2`` and
``phi_0 = sum_nu lambda_nu x_nu^2 / 2``. Each ``phi_k`` comes from one transport step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import LatticeModel, ModelError, frequencies
from .polynomial import Context, EXACT, FLOAT, Polynomial


class EikonalError(RuntimeError):
    pass


def _mul_trunc(p: Polynomial, q: Polynomial, deg: int) -> Polynomial:
    out: dict = {}
    for a, c in p.terms.items():
        da = sum(a)
        for b, e in q.terms.items():
            if da + sum(b) > deg:
                continue
            k = tuple(x + y for x, y in zip(a, b))
            out[k] = out.get(k, 0) + c * e
    return Polynomial(p.d, out)


def eikonal_residual(model: LatticeModel, phi: Polynomial, degree: int) -> Polynomial:
    """Taylor jet through ``degree`` of ``sum_eta a0_eta cosh((C eta).grad phi) + V_0``."""
    d = model.d
    exact = phi.is_exact() and model.is_exact()
    grad = phi.gradient()
    out = model.V(0).truncate_degree(degree)
    for eta in model.hops:
        a0 = model.a(eta, 0)
        if a0.is_zero():
            continue
        dv = model.displacement(eta)
        u = Polynomial(d)
        for nu in range(d):
            if dv[nu] != 0:
                u = u + grad[nu] * dv[nu]
        u = u.truncate_degree(degree)
        # cosh(u) = sum u^{2n}/(2n)!; u = O(|x|), so 2n <= degree suffices
        cosh = Polynomial.constant(d, 1)
        u2 = _mul_trunc(u, u, degree)
        power = Polynomial.constant(d, 1)
        n = 1
        while 2 * n <= degree and not u2.is_zero():
            power = _mul_trunc(power, u2, degree)
            if power.is_zero():
                break
            f = math.factorial(2 * n)
            cosh = cosh + (power * Fraction(1, f) if exact else power * (1.0 / f))
            n += 1
        out = out + _mul_trunc(a0, cosh, degree)
    return out


@dataclass
class EikonalSolution:
    lam: list
    pieces: list[Polynomial]
    ctx: Context = EXACT

    @property
    def d(self) -> int:
        return self.pieces[0].d

    @property
    def N_phi(self) -> int:
        return len(self.pieces) - 1

    @property
    def jet_degree(self) -> int:
        return self.N_phi + 2

    @property
    def jet(self) -> Polynomial:
        out = Polynomial(self.d)
        for p in self.pieces:
            out = out + p
        return out

    def piece(self, k: int) -> Polynomial:
        """``phi_k`` (homogeneous of degree ``k + 2``); zero beyond the computed jet."""
        if k < len(self.pieces):
            return self.pieces[k]
        raise EikonalError(f"phi_{k} not computed (jet has N_phi = {self.N_phi})")


def solve_eikonal(model: LatticeModel, N_phi: int, ctx: Context | None = None) -> EikonalSolution:
    """Transport iteration: ``phi_k[alpha] = v_{k+2}[alpha] / (2 lambda . alpha)``.

    ``v_{k+2}`` is the degree ``k+2`` part of the residual of ``phi_0 + ... + phi_{k-1}``;
    the linearisation of the cosh sum at ``phi_0`` is ``-2 sum_nu lambda_nu x_nu d_nu``.
    """
    if ctx is None:
        ctx = EXACT if model.is_exact() else FLOAT
    try:
        lam = frequencies(model, ctx)
    except ModelError as exc:
        raise EikonalError(str(exc)) from exc
    d = model.d
    half = Fraction(1, 2) if ctx.exact else 0.5
    phi0 = Polynomial(d)
    for nu in range(d):
        phi0 = phi0 + Polynomial.variable(d, nu) ** 2 * (lam[nu] * half)
    pieces = [phi0]
    phi = phi0
    for k in range(1, N_phi + 1):
        v = eikonal_residual(model, phi, k + 2).homogeneous_part(k + 2)
        new = {}
        for alpha, c in v.terms.items():
            div = 2 * sum(l * a for l, a in zip(lam, alpha))
            assert div > 0, "lambda . alpha must be positive"
            new[alpha] = c / div if not ctx.exact else Fraction(c) / div
        pk = Polynomial(d, new)
        if not ctx.exact:
            pk = pk.chop(ctx, scale=1.0)
        pieces.append(pk)
        phi = phi + pk
    return EikonalSolution(lam, pieces, ctx)


def residual_report(model: LatticeModel, sol: EikonalSolution, degree: int | None = None) -> dict:
    """Max ``|coefficient|`` of the eikonal residual per homogeneous degree."""
    degree = sol.jet_degree if degree is None else degree
    res = eikonal_residual(model, sol.jet, degree)
    parts = res.homogeneous_parts()
    return {str(k): parts[k].max_abs() if k in parts else 0.0 for k in range(degree + 1)}


# -- glued phase ----------------------------------------------------------

def smooth_step(t):
    """``C^infinity`` step: 0 for ``t <= 0``, 1 for ``t >= 1``, built from ``exp(-1/t)``."""
    t = np.asarray(t, dtype=float)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = f(t), f(1.0 - t)
    return a / (a + b)


def radial_cutoff(x, r_in: float, r_out: float):
    """1 on ``|x| <= r_in``, 0 on ``|x| >= r_out``."""
    r = np.linalg.norm(np.atleast_2d(x), axis=1)
    return smooth_step((r_out - r) / (r_out - r_in))


def _sphere_points(d: int, radius: float, count: int) -> np.ndarray:
    if d == 1:
        return np.array([[radius], [-radius]])
    ticks = np.linspace(-1.0, 1.0, count)
    pts = []
    for face in range(d):
        for sign in (-1.0, 1.0):
            for rest in itertools.product(ticks, repeat=d - 1):
                v = list(rest)
                v.insert(face, sign)
                pts.append(v)
    pts = np.array(pts)
    return radius * pts / np.linalg.norm(pts, axis=1, keepdims=True)


@dataclass
class GluedPhase:
    solution: EikonalSolution
    r_in: float
    r_out: float
    b: float
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self._phi = self.solution.jet.to_float()

    def __call__(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        if X.shape[1] != self.solution.d and X.shape[0] == self.solution.d and X.ndim == 2:
            X = X.T
        chi = radial_cutoff(X, self.r_in, self.r_out)
        r = np.linalg.norm(X, axis=1)
        inner = self._phi.evaluate_array(X)
        return chi * inner + (1.0 - chi) * self.b * r

    def scalar(self, x) -> float:
        return float(self([list(np.atleast_1d(x))])[0])


def default_slope(solution: EikonalSolution, r_out: float, count: int = 9) -> float:
    phi = solution.jet.to_float()
    pts = _sphere_points(solution.d, r_out, count)
    return 0.9 * float(np.min(phi.evaluate_array(pts) / r_out))


def glue_phase(solution: EikonalSolution, r_in: float, r_out: float, b: float | None = None,
               grid: int = 41) -> GluedPhase:
    """Glue the polynomial jet to ``b|x|`` between ``r_in`` and ``r_out``; checks positivity on a grid."""
    if not 0 < r_in < r_out:
        raise EikonalError("need 0 < r_in < r_out")
    if b is None:
        b = default_slope(solution, r_out)
    if b <= 0:
        raise EikonalError("slope b must be positive")
    g = GluedPhase(solution, r_in, r_out, b)
    d = solution.d
    R = 1.5 * r_out
    ticks = np.linspace(-R, R, grid if d <= 2 else 11)
    pts = np.array(list(itertools.product(ticks, repeat=d)))
    r = np.linalg.norm(pts, axis=1)
    pts = pts[r > 1e-12]
    vals = g(pts)
    positive = bool(np.all(vals > 0))
    # monotone growth along rays through the seam (sanity only)
    rays = _sphere_points(d, 1.0, 5)
    radii = np.linspace(0.05 * r_in, R, 60)
    monotone = True
    for u in rays:
        prof = g(radii[:, None] * u[None, :])
        if np.any(np.diff(prof) < -1e-12):
            monotone = False
            break
    g.report = {"positive": positive, "monotone_on_rays": monotone, "b": b, "r_in": r_in,
                "r_out": r_out, "min_value": float(vals.min()), "phi_at_0": float(g(np.zeros((1, d)))[0])}
    if not positive:
        raise EikonalError(f"glued phase not positive on the grid (min {vals.min():.3g})")
    return g
