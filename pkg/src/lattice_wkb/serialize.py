"""JSON round-tripping for polynomials, series and lattice models."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .polynomial import Polynomial, is_exact_number
from .series import PolySeries, PuiseuxScalar


def scalar_to_json(c) -> dict:
    if is_exact_number(c):
        c = Fraction(c)
        return {"num": str(c.numerator), "den": str(c.denominator)}
    return {"val": float(c)}


def scalar_from_json(rec: dict):
    if "val" in rec:
        return float(rec["val"])
    return Fraction(int(rec["num"]), int(rec["den"]))


def poly_to_json(p: Polynomial) -> list[dict]:
    out = []
    for alpha, c in p.sorted_terms():
        rec = {"alpha": list(alpha)}
        rec.update(scalar_to_json(c))
        out.append(rec)
    return out


def poly_from_json(records: list[dict], d: int | None = None) -> Polynomial:
    if d is None:
        if not records:
            raise ValueError("cannot infer the dimension of an empty polynomial")
        d = len(records[0]["alpha"])
    return Polynomial(d, [(tuple(r["alpha"]), scalar_from_json(r)) for r in records])


def series_to_json(s) -> dict:
    terms = []
    for k in s.orders():
        c = s.coeffs[k]
        if isinstance(c, Polynomial):
            terms.append({"order2": k, "poly": poly_to_json(c)})
        else:
            rec = {"order2": k}
            rec.update(scalar_to_json(c))
            terms.append(rec)
    return {"terms": terms, "trunc2": s.trunc2}


def series_from_json(rec: dict, d: int | None = None):
    terms = rec["terms"]
    if any("poly" in t for t in terms) or d is not None:
        return PolySeries({t["order2"]: poly_from_json(t["poly"], d) for t in terms}, rec.get("trunc2"), d=d)
    return PuiseuxScalar({t["order2"]: scalar_from_json(t) for t in terms}, rec.get("trunc2"))


def dump_json(obj, path: str | Path) -> None:
    """Deterministic JSON dump (sorted keys, fixed indent, trailing newline)."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
