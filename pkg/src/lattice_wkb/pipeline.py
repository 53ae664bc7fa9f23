"""Chaining of the stages: normal form, eikonal, conjugation, spectral series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .conjugation import ConjugatedExpansion, conjugate_expand
from .eikonal import EikonalSolution, solve_eikonal
from .hermite import HarmonicLevel, WeightExpansion, find_level, harmonic_levels, weight_expansion
from .model import LatticeModel, NormalForm, harmonic_shift, normal_form
from .polynomial import EXACT, FLOAT, Context
from .series import PolySeries
from .spectral import Branch, PencilSeries, SpectralProblem, build_pencil, pencil_eigen


@dataclass
class Pipeline:
    model: LatticeModel
    normal: NormalForm
    transformed: LatticeModel
    solution: EikonalSolution
    expansion: ConjugatedExpansion
    weights: WeightExpansion
    problem: SpectralProblem
    levels: list[HarmonicLevel]
    ctx: Context

    @property
    def N2(self) -> int:
        return self.expansion.N2

    def level(self, E=None, index: int | None = None) -> HarmonicLevel:
        return find_level(self.levels, E, index)


def build_pipeline(model: LatticeModel, N, alpha_cutoff: int = 4, N_phi: int | None = None,
                   D: int | None = None, ctx: Context | None = None) -> Pipeline:
    """Run every formal stage for truncation order ``N`` and Hermite levels with ``|alpha| <= alpha_cutoff``."""
    if ctx is None:
        ctx = EXACT if model.is_exact() else FLOAT
    if not ctx.exact:
        model = model.to_float()
    nf, transformed = normal_form(model, ctx)
    N2 = int(round(2 * Fraction(N)))
    if N_phi is None or N_phi < N2:
        N_phi = max(N2 + 1, N_phi or 0)
    sol = solve_eikonal(transformed, N_phi, ctx)
    if D is None:
        D = alpha_cutoff + N2 + 4
    exp = conjugate_expand(transformed, sol, Fraction(N2, 2), D, ctx)
    w = weight_expansion(sol, Fraction(N2, 2))
    prob = SpectralProblem(exp, w)
    shift = harmonic_shift(transformed)
    lam = sol.lam if ctx.exact else [float(l) for l in sol.lam]
    levels = harmonic_levels(lam, shift if ctx.exact else float(shift), alpha_cutoff)
    return Pipeline(model, nf, transformed, sol, exp, w, prob, levels, ctx)


def level_branches(pipe: Pipeline, level: HarmonicLevel, N2: int | None = None) -> tuple[PencilSeries, list[Branch]]:
    pencil = build_pencil(pipe.problem, level, N2)
    return pencil, pencil_eigen(pencil, pipe.problem)


def normalized_psi(pipe: Pipeline, branch: Branch) -> PolySeries:
    """``psi`` scaled (float) so that its leading Gaussian norm is 1."""
    lead = pipe.problem.inner(branch.psi, branch.psi, branch.psi.trunc2)
    c0 = float(lead.get(lead.floor2)) if lead.coeffs else 1.0
    if lead.coeffs and lead.floor2 != 0:
        raise ValueError("eigenvector series does not start at order 0")
    s = 1.0 / math.sqrt(c0)
    return PolySeries({k: p.to_float() * s for k, p in branch.psi.coeffs.items()}, branch.psi.trunc2,
                      d=branch.psi.d)
