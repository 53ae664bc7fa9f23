"""Command-line front end: validate -> eikonal -> expand -> spectrum -> quasimode -> verify.

Every run reads one JSON config (optional), applies flag overrides, writes the resolved
config next to its artifacts and exits with 0 (ok), 2 (validation failure),
3 (numeric-check failure) or 4 (config error).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import sys
import time
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .conjugation import ConjugationError, g0_closed_form, gk_as_diffop, structure_report
from .eikonal import EikonalError, EikonalSolution, glue_phase, residual_report as eikonal_residual_report
from .model import LatticeModel, ModelError, validate_hypotheses
from .pipeline import Pipeline, build_pipeline, level_branches
from .polynomial import EXACT, FLOAT
from .quasimode import (LatticeBox, assemble_hamiltonian, assemble_quasimode, gaussian_mass, gram_report,
                        interior_mask, reference_spectrum, residual_report, scaling_fit, to_x_variables)
from .hermite import inner_k
from .serialize import (dump_json, poly_from_json, poly_to_json, scalar_from_json, scalar_to_json,
                        series_from_json, series_to_json)
from .spectral import SpectralError, pencil_residual, projector_checks

log = logging.getLogger("lattice_wkb")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4
STAGES = ("validate", "eikonal", "expand", "spectrum", "quasimode", "verify")

DEFAULTS = {
    "model": "reference",
    "mode": "auto",
    "N_G": 2,
    "N_phi": None,
    "N_spec": None,
    "M_trunc": None,
    "alpha_cutoff": 4,
    "levels": [0, 1],
    "energy": None,
    "glue": {"r_in": 1.2, "r_out": 1.45, "b": None},
    "cutoff": {"k_in": 1.0, "k_out": 1.2},
    "box": {"L": 1.5, "x0": None},
    "eps_grid": [0.04, 0.02, 0.01],
    "n_low": 3,
    "out": "run",
    "seed": 0,
    "thresholds": {},
    "validation": {"sample_radius": 0.5, "grid_count": 21},
}


class ConfigError(ValueError):
    pass


class StageFailure(RuntimeError):
    def __init__(self, stage: str, code: int, message: str):
        super().__init__(message)
        self.stage, self.code = stage, code


# -- configuration ---------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"unknown config field {k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "thresholds":
            for kk in v:
                if kk not in base[k]:
                    raise ConfigError(f"unknown config field {k}.{kk}")
            out[k] = {**base[k], **v}
        else:
            out[k] = v
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            cfg = _merge(cfg, json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    flags = {
        "model": args.model, "mode": args.mode, "N_G": args.N, "N_phi": args.N_phi,
        "M_trunc": args.M_trunc, "alpha_cutoff": args.alpha_cutoff, "out": args.out, "seed": args.seed,
        "energy": args.energy, "n_low": args.n_low,
    }
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    if args.level is not None:
        cfg["levels"] = args.level
    if args.eps is not None:
        cfg["eps_grid"] = args.eps
    if args.L is not None:
        cfg["box"]["L"] = args.L
    for item in args.set or []:
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        parts = key.split(".")
        if len(parts) == 1:
            cfg = _merge(cfg, {parts[0]: val})
        elif len(parts) == 2:
            cfg = _merge(cfg, {parts[0]: {parts[1]: val}})
        else:
            raise ConfigError(f"cannot set nested key {key!r}")
    return normalize_config(cfg)


def normalize_config(cfg: dict) -> dict:
    if cfg["mode"] not in ("auto", "exact", "float"):
        raise ConfigError(f"mode must be auto, exact or float (got {cfg['mode']!r})")
    try:
        N2 = 2 * Fraction(str(cfg["N_G"]))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"N_G must be a half-integer: {exc}") from exc
    if N2.denominator != 1 or N2 < 0:
        raise ConfigError("N_G must be a nonnegative half-integer")
    N2 = int(N2)
    cfg["N_G"] = N2 / 2
    if cfg["N_spec"] is None or 2 * cfg["N_spec"] > N2:
        if cfg["N_spec"] is not None:
            log.warning("N_spec raised/limited to N_G = %s", cfg["N_G"])
        cfg["N_spec"] = cfg["N_G"]
    need_phi = N2 + 1
    if cfg["N_phi"] is None:
        cfg["N_phi"] = need_phi
    elif cfg["N_phi"] < need_phi:
        log.warning("N_phi raised from %s to %s (needs N_phi >= 2 N_G + 1)", cfg["N_phi"], need_phi)
        cfg["N_phi"] = need_phi
    if cfg["M_trunc"] is None:
        cfg["M_trunc"] = cfg["N_spec"]
    if 2 * cfg["M_trunc"] > 2 * cfg["N_spec"]:
        raise ConfigError("M_trunc exceeds the spectral truncation N_spec")
    if not isinstance(cfg["levels"], list):
        cfg["levels"] = [cfg["levels"]]
    if cfg["eps_grid"] and any(e <= 0 for e in cfg["eps_grid"]):
        raise ConfigError("eps values must be positive")
    cfg["eps_grid"] = sorted(cfg["eps_grid"], reverse=True)
    return cfg


def load_model(spec: str) -> LatticeModel:
    path = Path(spec)
    if not path.exists():
        name = spec.removeprefix("builtin:")
        ref = resources.files("lattice_wkb") / "models" / f"{name}.json"
        if not ref.is_file():
            raise ConfigError(f"model {spec!r} is neither a file nor a shipped model")
        return LatticeModel.from_json(json.loads(ref.read_text()))
    try:
        return LatticeModel.from_json(json.loads(path.read_text()))
    except (KeyError, json.JSONDecodeError, ModelError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc


def config_hash(cfg: dict, model: LatticeModel, keys: tuple) -> str:
    rec = {"model": model.to_json(), **{k: cfg[k] for k in keys}}
    return hashlib.sha256(json.dumps(rec, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _scalar(v):
    return scalar_to_json(v)


# -- run state ---------------------------------------------------------------------

class Run:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.model = load_model(cfg["model"])
        if cfg["mode"] == "exact":
            self.ctx = EXACT
        elif cfg["mode"] == "float":
            self.ctx = FLOAT
        else:
            self.ctx = EXACT if self.model.is_exact() else FLOAT
        self._pipe: Pipeline | None = None
        self._spectrum: dict | None = None
        self.hash_formal = config_hash(cfg, self.model, ("mode", "N_G", "N_phi", "alpha_cutoff"))

    @property
    def pipe(self) -> Pipeline:
        if self._pipe is None:
            try:
                self._pipe = build_pipeline(self.model, Fraction(str(self.cfg["N_G"])), self.cfg["alpha_cutoff"],
                                            self.cfg["N_phi"], ctx=self.ctx)
            except ModelError as exc:
                raise StageFailure("normal-form", EXIT_VALIDATION, str(exc)) from exc
            except (EikonalError, ConjugationError) as exc:
                raise StageFailure("expand", EXIT_NUMERIC, str(exc)) from exc
        return self._pipe

    def levels(self):
        pipe = self.pipe
        if self.cfg["energy"] is not None:
            return [pipe.level(E=Fraction(str(self.cfg["energy"])) if self.ctx.exact else float(self.cfg["energy"]))]
        try:
            return [pipe.level(index=i) for i in self.cfg["levels"]]
        except IndexError as exc:
            raise ConfigError(f"level index out of range (have {len(pipe.levels)} complete levels)") from exc


# -- stages ------------------------------------------------------------------------

def stage_validate(run: Run) -> dict:
    v = run.cfg["validation"]
    rep = validate_hypotheses(run.model, v["sample_radius"], v["grid_count"])
    dump_json({"model": run.model.name, **rep.to_json()}, run.out / "validation.json")
    print(f"validate: {'pass' if rep.passed else 'FAIL'} ({len(rep.failures())} failing clauses)")
    if not rep.passed:
        raise StageFailure("validate", EXIT_VALIDATION, "; ".join(rep.failures()))
    return {"passed": True}


def stage_eikonal(run: Run) -> dict:
    pipe = run.pipe
    sol = pipe.solution
    res = eikonal_residual_report(pipe.transformed, sol)
    rec = {
        "config_hash": run.hash_formal,
        "lambda": [_scalar(l) for l in sol.lam],
        "normal_form": pipe.normal.to_json(),
        "N_phi": sol.N_phi,
        "pieces": [{"k": k, "poly": poly_to_json(p)} for k, p in enumerate(sol.pieces)],
        "coefficients": poly_to_json(sol.jet),
        "residual": res,
    }
    dump_json(rec, run.out / "eikonal.json")
    worst = max((v for k, v in res.items() if int(k) <= sol.jet_degree), default=0.0)
    print(f"eikonal: N_phi={sol.N_phi}, max residual through degree {sol.jet_degree}: {worst:.3g}")
    tol = 0.0 if run.ctx.exact else 1e-8
    if worst > tol:
        raise StageFailure("eikonal", EXIT_NUMERIC, f"eikonal residual {worst:.3g} not zero")
    return rec


def load_eikonal(path: Path, d: int, ctx) -> EikonalSolution | None:
    if not path.exists():
        return None
    rec = json.loads(path.read_text())
    pieces = [poly_from_json(p["poly"], d) for p in sorted(rec["pieces"], key=lambda r: r["k"])]
    lam = [scalar_from_json(l) for l in rec["lambda"]]
    return EikonalSolution(lam, pieces, ctx)


def stage_expand(run: Run, check_g0: bool = False) -> dict:
    pipe = run.pipe
    exp = pipe.expansion
    cached = load_eikonal(run.out / "eikonal.json", exp.d, run.ctx)
    if cached is not None and json.loads((run.out / "eikonal.json").read_text()).get("config_hash") == run.hash_formal:
        same = all(a == b if run.ctx.exact else a.allclose(b, 1e-12)
                   for a, b in zip(cached.pieces, pipe.solution.pieces))
        if not same:
            raise StageFailure("expand", EXIT_NUMERIC, "eikonal.json disagrees with the recomputed jet")
    ops = []
    failures = []
    for k2 in range(exp.N2 + 1):
        k = Fraction(k2, 2)
        entry = {"k2": k2}
        try:
            op = gk_as_diffop(exp, k)
            srep = structure_report(exp, k)
        except ConjugationError as exc:
            failures.append(str(exc))
            entry["error"] = str(exc)
            ops.append(entry)
            continue
        top = min(exp.D - k2, k2 + 6)
        entry["matrix"] = [{"out": list(g), "in": list(b), **_scalar(c)} for g, b, c in exp.matrix(k2, top)]
        entry["matrix_degree"] = top
        entry["b"] = [{"alpha": list(a), "poly": poly_to_json(p)}
                      for a, p in sorted(op.coeffs.items(), key=lambda t: (sum(t[0]), t[0]))]
        entry["structure"] = srep
        if not srep["ok"]:
            failures.extend(srep["violations"])
        ops.append(entry)
    rec = {"config_hash": run.hash_formal, "N2": exp.N2, "D": exp.D, "operators": ops}
    if check_g0:
        lhs = gk_as_diffop(exp, 0)
        rhs = g0_closed_form(exp)
        ok = (lhs == rhs) if run.ctx.exact else lhs.allclose(rhs, 1e-9)
        rec["g0_check"] = {"ok": ok}
        print(f"expand: G_0 closed form {'matches' if ok else 'MISMATCH'}")
        if not ok:
            failures.append("G_0 does not match its closed form")
    dump_json(rec, run.out / "gk.json")
    print(f"expand: G_k for k = 0..{exp.N}, validity degree {exp.D}")
    if failures:
        raise StageFailure("expand", EXIT_NUMERIC, "; ".join(failures))
    return rec


def stage_spectrum(run: Run) -> dict:
    pipe = run.pipe
    N2 = int(2 * run.cfg["N_spec"])
    out_levels = []
    failures = []
    for lev in run.levels():
        pencil, branches = level_branches(pipe, lev, N2)
        checks = projector_checks(pipe.problem, lev, N2, test_set=lev.members, pairs=[(a, a) for a in lev.members])
        parity = {sum(a) % 2 for a in lev.members}
        half = pencil.half_integer_entries()
        brs = []
        for br in branches:
            resid = pencil_residual(pencil, br)
            brs.append({
                **br.to_json(),
                "series": [{"j2": k, **_scalar(v)} for k, v in sorted(br.eigenvalue.coeffs.items())],
                "psi": series_to_json(br.psi),
                "pencil_residual_zero": all((np.all(M == 0) if pencil.exact and not br.float_fallback
                                             else np.max(np.abs(np.asarray(M, dtype=float))) < 1e-8)
                                            for M in resid.values()),
            })
        entry = {
            **lev.to_json(),
            "F": pencil.to_json()["F"], "FG": pencil.to_json()["FG"],
            "parity_clean": (len(parity) == 1 and not half
                             and all(not {k for k in b["series"] if k["j2"] % 2} for b in brs)),
            "resolution": "split" if all(b.status == "split" for b in branches) else "unresolved",
            "projector_ok": checks["ok"],
            "branches": brs,
        }
        if not checks["ok"]:
            failures.append(f"projector checks failed at E={lev.E}")
        if len(parity) == 1 and not entry["parity_clean"]:
            failures.append(f"half-integer terms survive at E={lev.E}")
        out_levels.append(entry)
        series = " + ".join(f"{v}*eps^{Fraction(k, 2)}" for k, v in sorted(branches[0].eigenvalue.coeffs.items()))
        print(f"spectrum: E={lev.E} m={lev.m}: {series}")
    rec = {"config_hash": run.hash_formal, "N2": N2, "levels": out_levels}
    dump_json(rec, run.out / "spectrum.json")
    run._spectrum = rec
    if failures:
        raise StageFailure("spectrum", EXIT_NUMERIC, "; ".join(failures))
    return rec


def _load_branches(run: Run) -> list[dict]:
    """Branches from spectrum.json when it matches this configuration; recomputed otherwise."""
    rec = run._spectrum
    path = run.out / "spectrum.json"
    if rec is None and path.exists():
        cand = json.loads(path.read_text())
        if cand.get("config_hash") == run.hash_formal and cand.get("N2") == int(2 * run.cfg["N_spec"]):
            rec = cand
    if rec is None:
        rec = stage_spectrum(run)
    d = run.model.d
    out = []
    for lev in rec["levels"]:
        for b in lev["branches"]:
            out.append({"E": lev["E"], "members": [tuple(a) for a in lev["I_E"]],
                        "eigenvalue": series_from_json(b["eigenvalue"]),
                        "psi": series_from_json(b["psi"], d)})
    return out


def _normalize(run: Run, psi):
    lead = inner_k(psi, psi, run.pipe.weights, psi.trunc2)
    c0 = float(lead.get(0))
    s = 1.0 / math.sqrt(c0)
    return psi.map(lambda p: p.to_float() * s)


def stage_quasimode(run: Run) -> dict:
    M2 = int(2 * run.cfg["M_trunc"])
    out = []
    for b in _load_branches(run):
        q = to_x_variables(b["psi"].truncate(M2))
        out.append({"E": b["E"], "floor2": q.floor2,
                    "uhat": [{"l2": l2, "poly": poly_to_json(q.uhat(l2))} for l2 in q.orders()],
                    "half_integer_orders": q.half_integer_orders()})
    rec = {"config_hash": run.hash_formal, "M_trunc2": M2, "branches": out}
    dump_json(rec, run.out / "quasimode.json")
    print(f"quasimode: {len(out)} branch(es), M_trunc = {run.cfg['M_trunc']}")
    return rec


def stage_verify(run: Run) -> dict:
    cfg = run.cfg
    pipe = run.pipe
    M2 = int(2 * cfg["M_trunc"])
    d = run.model.d
    branches = _load_branches(run)
    identity_C = np.allclose(np.array(pipe.normal.C, dtype=float), np.eye(d))
    phase = None
    if identity_C:
        g = cfg["glue"]
        phase = glue_phase(pipe.solution, g["r_in"], g["r_out"], g["b"])
    else:
        print("verify: normal-form map is not the identity; quasimode residual and Gram columns skipped")
    cut = (cfg["cutoff"]["k_in"], cfg["cutoff"]["k_out"])
    x0 = tuple(cfg["box"]["x0"]) if cfg["box"]["x0"] is not None else None
    rows = []
    n_low = max(cfg["n_low"], 1)
    lam = [float(l) for l in pipe.solution.lam]
    for eps in cfg["eps_grid"]:
        box = LatticeBox(d, eps, cfg["box"]["L"], x0)
        H = assemble_hamiltonian(pipe.model, eps, box)
        w = reference_spectrum(H, n_low, d=d)
        E0 = branches[0]["eigenvalue"]
        series_eval = eps * E0.evaluate(eps, M2)
        row = {"eps": eps, **{f"eig_{i}": float(w[i]) for i in range(len(w))},
               "series_eval": series_eval, "abs_err": abs(float(w[0]) - series_eval)}
        if phase is not None:
            vs = []
            for b in branches:
                psi = _normalize(run, b["psi"])
                vs.append(assemble_quasimode(to_x_variables(psi), M2, phase, cut, box))
            mask = interior_mask(box, cut[0], pipe.model.hop_reach())
            rr = residual_report(H, vs[0], series_eval, mask)
            gr = gram_report(vs, eps, d, gaussian_mass(lam, eps))
            G = np.array(gr["gram"])
            off = G - np.diag(np.diag(G))
            row.update({"r_global": rr["r_global"], "r_interior": rr["r_interior"],
                        "gram_dev": gr["deviation"], "gram_offdiag": float(np.max(np.abs(off))) if len(vs) > 1 else 0.0,
                        "gram_diag_min": float(np.min(np.diag(G))), "gram_diag_max": float(np.max(np.diag(G)))})
        else:
            row.update({"r_global": math.nan, "r_interior": math.nan, "gram_dev": math.nan})
        rows.append(row)
    keys = list(rows[0])
    with (run.out / "verify.csv").open("w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    eps = [r["eps"] for r in rows]
    summary = {"config_hash": run.hash_formal, "rows": len(rows)}
    if len(rows) >= 3:
        summary["eigenvalue_fit"] = scaling_fit(eps, [r["abs_err"] for r in rows])
        if phase is not None:
            summary["residual_fit"] = scaling_fit(eps, [r["r_interior"] for r in rows])
            offd = [r["gram_offdiag"] for r in rows]
            summary["gram_offdiag_fit"] = scaling_fit(eps, offd) if min(offd) > 1e-13 else {
                "slope": None, "note": "off-diagonal entries at round-off (zero by symmetry)", "values": offd}
    if phase is not None:
        diag = [v for r in rows for v in (r["gram_diag_min"], r["gram_diag_max"])]
        summary["gram_diag_spread"] = (max(diag) - min(diag)) / max(diag)
        summary["glue"] = phase.report
    failures = []
    th = cfg["thresholds"]
    checks = {"eig_slope": ("eigenvalue_fit", "slope"), "residual_slope": ("residual_fit", "slope")}
    for name, (fit, key) in checks.items():
        if name in th and fit in summary:
            val = summary[fit][key]
            if val is None or not val >= th[name]:
                failures.append(f"{name} {val} < {th[name]}")
    summary["threshold_failures"] = failures
    dump_json(summary, run.out / "summary.json")
    fit = summary.get("eigenvalue_fit", {}).get("slope")
    print(f"verify: {len(rows)} eps values, eigenvalue error slope {fit}")
    if failures:
        raise StageFailure("verify", EXIT_NUMERIC, "; ".join(failures))
    return summary


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lattice-wkb", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=STAGES + ("all",))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--model", help="model JSON file or shipped model name (reference, anisotropic, isotropic, variable_hop)")
    p.add_argument("--mode", choices=["auto", "exact", "float"])
    p.add_argument("--N", type=float, help="truncation order of the conjugated expansion (half-integer)")
    p.add_argument("--N-phi", dest="N_phi", type=int)
    p.add_argument("--M-trunc", dest="M_trunc", type=float)
    p.add_argument("--alpha-cutoff", dest="alpha_cutoff", type=int)
    p.add_argument("--level", type=int, nargs="+", help="harmonic level indices (ascending energy)")
    p.add_argument("--energy", type=float, help="select the harmonic level by energy")
    p.add_argument("--eps", type=float, nargs="+", help="eps grid for verify")
    p.add_argument("--L", type=float, help="box half-width")
    p.add_argument("--n-low", dest="n_low", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=JSON", help="override any config field")
    p.add_argument("--check-g0", action="store_true", help="compare G_0 with its closed form (expand)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out_dir = Path(args.out or "run")
    try:
        cfg = resolve_config(args)
        out_dir = Path(cfg["out"])
        run = Run(cfg)
        dump_json(cfg, run.out / "config.resolved.json")
        np.random.seed(cfg["seed"])
        stages = STAGES if args.command == "all" else (args.command,)
        t0 = time.perf_counter()
        for st in stages:
            if st == "expand":
                stage_expand(run, args.check_g0 or args.command == "all")
            else:
                globals()[f"stage_{st}"](run)
        log.info("done in %.2fs", time.perf_counter() - t0)
        return EXIT_OK
    except ConfigError as exc:
        return _fail(out_dir, "config", EXIT_CONFIG, str(exc))
    except StageFailure as exc:
        return _fail(out_dir, exc.stage, exc.code, str(exc))
    except (SpectralError, EikonalError, ConjugationError) as exc:
        return _fail(out_dir, type(exc).__name__, EXIT_NUMERIC, str(exc))


def _fail(out_dir: Path, stage: str, code: int, message: str) -> int:
    rec = {"stage": stage, "exit_code": code, "message": message}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_json(rec, out_dir / "error.json")
    except OSError:
        pass
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
