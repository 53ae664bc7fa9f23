import csv
import json
import math
import subprocess
import sys

import pytest

from lattice_wkb import cli
from lattice_wkb.model import LatticeModel, reference_model
from lattice_wkb.polynomial import Polynomial
from lattice_wkb.serialize import dump_json


def run(tmp_path, *args, sub="run"):
    out = tmp_path / sub
    code = cli.main([*args, "--out", str(out)])
    return code, out


def read(path):
    return json.loads(path.read_text())


def test_validate_reference(tmp_path):
    code, out = run(tmp_path, "validate")
    assert code == 0
    rec = read(out / "validation.json")
    assert rec["passed"] and all(c["passed"] for c in rec["clauses"].values())


def test_eikonal_artifact(tmp_path):
    code, out = run(tmp_path, "eikonal", "--N-phi", "4")
    assert code == 0
    rec = read(out / "eikonal.json")
    assert {"alpha": [4], "num": "-1", "den": "96"} in rec["coefficients"]
    assert all(v == 0 for v in rec["residual"].values())


def test_expand_artifact(tmp_path):
    code, out = run(tmp_path, "expand", "--check-g0")
    assert code == 0
    rec = read(out / "gk.json")
    assert rec["g0_check"]["ok"] is True
    assert [op["k2"] for op in rec["operators"]] == [0, 1, 2, 3, 4]
    assert all(op["structure"]["ok"] for op in rec["operators"])


def test_spectrum_artifact(tmp_path):
    code, out = run(tmp_path, "spectrum")
    assert code == 0
    rec = read(out / "spectrum.json")
    assert [lv["E"] for lv in rec["levels"]] == ["1", "3"]
    assert all(lv["parity_clean"] and lv["projector_ok"] for lv in rec["levels"])


def test_verify_grid(tmp_path):
    code, out = run(tmp_path, "verify", "--eps", "0.04", "0.02", "0.01")
    assert code == 0
    with (out / "verify.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert {"eps", "series_eval", "abs_err", "r_global", "r_interior", "gram_dev"} <= set(rows[0])
    summary = read(out / "summary.json")
    assert summary["eigenvalue_fit"]["slope"] > 3.5
    assert summary["residual_fit"]["slope"] > 2.5


def test_all_is_deterministic(tmp_path):
    assert run(tmp_path, "all", sub="a")[0] == 0
    assert run(tmp_path, "all", sub="b")[0] == 0
    names = ["validation.json", "eikonal.json", "gk.json", "spectrum.json", "quasimode.json", "verify.csv",
             "summary.json"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_verify_reuses_spectrum(tmp_path, monkeypatch):
    assert run(tmp_path, "spectrum")[0] == 0

    def refuse(_):
        raise AssertionError("spectrum recomputed")

    monkeypatch.setattr(cli, "stage_spectrum", refuse)
    assert run(tmp_path, "verify")[0] == 0


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N_G": 1, "eps_grid": [0.05, 0.025, 0.0125], "box": {"L": 1.2}}))
    code, out = run(tmp_path, "verify", "--config", str(cfg), "--set", "n_low=2")
    assert code == 0
    resolved = read(out / "config.resolved.json")
    assert resolved["N_G"] == 1 and resolved["n_low"] == 2 and resolved["box"]["L"] == 1.2
    assert resolved["eps_grid"] == [0.05, 0.025, 0.0125]


def test_short_jet_is_raised(tmp_path):
    code, out = run(tmp_path, "eikonal", "--N-phi", "1")
    assert code == 0
    assert read(out / "config.resolved.json")["N_phi"] == 5


def test_unknown_field_is_config_error(tmp_path):
    code, out = run(tmp_path, "validate", "--set", "bogus=1")
    assert code == 4
    assert read(out / "error.json")["exit_code"] == 4


def test_missing_model_is_config_error(tmp_path):
    assert run(tmp_path, "validate", "--model", str(tmp_path / "nope.json"))[0] == 4


def test_invalid_model_fails_validation(tmp_path):
    m = reference_model()
    m.hops[(0,)] = [Polynomial.constant(1, 1)]
    path = tmp_path / "bad.json"
    dump_json(m.to_json(), path)
    code, out = run(tmp_path, "validate", "--model", str(path))
    assert code == 2
    assert read(out / "error.json")["stage"] == "validate"


def test_threshold_failure_is_numeric(tmp_path):
    code, out = run(tmp_path, "verify", "--set", 'thresholds={"eig_slope": 10}')
    assert code == 3
    assert "eig_slope" in read(out / "error.json")["message"]


def test_transformed_model_skips_quasimode_columns(tmp_path):
    code, out = run(tmp_path, "all", "--model", "anisotropic", "--eps", "0.08", "0.04", "0.02", "--L", "2.0")
    assert code == 0
    with (out / "verify.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert all(math.isnan(float(r["r_interior"])) for r in rows)
    assert read(out / "summary.json")["eigenvalue_fit"]["slope"] > 0.9


def test_model_file_round_trip(tmp_path):
    path = tmp_path / "ref.json"
    dump_json(reference_model().to_json(), path)
    assert LatticeModel.load(path).hops == reference_model().hops
    assert run(tmp_path, "validate", "--model", str(path))[0] == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lattice_wkb", "validate", "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "validate: pass" in res.stdout


def test_bad_command_exits_nonzero():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
