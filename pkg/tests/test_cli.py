import csv
import json

import pytest

from rmplate import __version__
from rmplate.cli import run


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_check_tensors_iso(capsys):
    assert run(["check-tensors", "--material", "iso", "--lambda", "1", "--mu", "1"]) == 0
    doc = _json(capsys)
    assert doc["results"]["symmetry"]["passed"]
    assert doc["tool"] == "rmplate" and doc["version"] == __version__ and doc["seed"] == 0
    assert doc["config"]["material"]["lambda"] == "1"


def test_solve_incompatible_on_disk(capsys):
    assert run(["solve", "--domain", "disk", "--refine", "0", "--Q", "1"]) == 1
    doc = _json(capsys)
    comp = doc["results"]["compatibility"]
    assert not comp["pass"] and comp["r0"] > 1


def test_solve_compatible(tmp_path, capsys):
    out, fld = tmp_path / "r.json", tmp_path / "f.json"
    code = run(["solve", "--domain", "disk", "--refine", "0", "--M1=-n2", "--M2=n1", "--out", str(out),
                "--field-out", str(fld), "--seed", "5"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["seed"] == 5 and doc["results"]["status"] == "solved"
    assert doc["results"]["residual"] <= 1e-10
    assert "L2" in doc["results"]["caveat"]
    f = json.loads(fld.read_text())
    assert len(f["phi"]) == len(f["w"]) == len(f["dof_coords"])


def test_solve_with_configs(tmp_path, capsys):
    mat = tmp_path / "m.ini"
    mat.write_text("[material]\nkind = orthotropic\nE1 = 10\nE2 = 2\nnu12 = 0.3\nG12 = 1.5\n")
    dat = tmp_path / "d.ini"
    dat.write_text("[data]\nQ = x\nM1 = 0\n")
    code = run(["solve", "--material-config", str(mat), "--data-config", str(dat), "--refine", "0", "--project"])
    assert code == 0
    doc = _json(capsys)
    assert doc["results"]["notes"][0].startswith("projected")
    assert doc["config"]["material"]["kind"] == "orthotropic"


def test_three_spheres_const_w(tmp_path, capsys):
    out, svg = tmp_path / "t.csv", tmp_path / "t.svg"
    assert run(["three-spheres", "--radii", "1,0.5,0.25", "--out", str(out), "--svg", str(svg)]) == 0
    rows = [r for r in csv.DictReader(line for line in out.read_text().splitlines() if not line.startswith("#"))]
    assert float(rows[0]["tau_emp"]) == pytest.approx(0.5, abs=1e-3)
    assert svg.read_text().startswith("<?xml")


def test_korn_csv(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert run(["korn", "--kind", "poincare", "--refinements", "1", "--out", str(out)]) == 0
    lines = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert lines[0] == "level,n_triangles,eigenvalue,constant" and len(lines) == 3


def test_mesh_write_and_validate(tmp_path, capsys):
    m = tmp_path / "d.mesh"
    assert run(["mesh", "--kind", "disk", "--circles", "0.5", "--out", str(m)]) == 0
    capsys.readouterr()
    assert run(["mesh", "--validate", str(m)]) == 0
    assert _json(capsys)["results"]["diagnostics"]["ok"]


def test_convergence_min_rate(capsys):
    assert run(["convergence", "--levels", "1", "--min-rate", "1.5"]) == 0
    assert run(["convergence", "--levels", "1", "--min-rate", "10"]) == 1


def test_regularity_disk(capsys):
    assert run(["regularity", "--profile", "circle:1", "--levels", "2", "--n", "1"]) == 0
    doc = _json(capsys)["results"]
    assert doc["pushforward"]["pass"] and doc["h2"]["in_hypothesis"]


def test_config_file_and_flags_override(tmp_path, capsys):
    c = tmp_path / "c.ini"
    c.write_text("[material]\nlambda = 3\n[run]\nseed = 9\n")
    assert run(["check-tensors", "--config", str(c), "--mu", "2"]) == 0
    doc = _json(capsys)
    assert doc["config"]["material"] == {**doc["config"]["material"], "lambda": "3", "mu": "2"}
    assert doc["seed"] == 9


@pytest.mark.parametrize("argv", [["bogus"], ["solve", "--nope"], [], ["korn", "--kind", "wrong"],
                                  ["solve", "--tol", "-1"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == 64


def test_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.mesh"
    bad.write_text("garbage\n")
    assert run(["solve", "--mesh", str(bad)]) == 1
    assert run(["check-tensors", "--mu", "-1"]) == 1


def test_version(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out
