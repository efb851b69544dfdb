import csv
import json
import math
import pathlib

import numpy as np
import pytest

from conftest import G_periodic
from nlgreen import cli
from nlgreen.errors import SpecError

SPECS = pathlib.Path(__file__).resolve().parent.parent / "examples_specs"
PERIODIC = (SPECS / "periodic.yaml").read_text()


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, text, name="spec.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_shipped_periodic_example():
    spec, opts = cli.parse_spec(SPECS / "periodic.yaml")
    assert spec.order == 1 and spec.shared
    assert spec.problem.shift == 1.0 and spec.deltas == (0.5,)
    assert spec.functionals[0].support == (0.0, 1.0)
    assert opts.tol == 1e-10 and opts.grid == (21, 21)
    assert opts.points == [(0.5, 0.25), (0.25, 0.5)]


@pytest.mark.parametrize("old, new, line, message", [
    ("deltas: [0.5]", "deltas: [0.5, 1]", 7, "expected 1 deltas"),
    ("interval: [0, 1]}", "interval: [0, 2]}", 9, "not inside"),
    ('coefficients: ["0"]', 'coefficients: ["0 +"]', 4, "coefficient"),
    ('coefficients: ["0"]', 'coefficients: ["0", "1"]', 4, "expected 1 coefficients"),
    ("boundary: periodic", "boundary: {alpha: [[1, 0]], beta: [[1]]}", 6, "entries"),
    ("M: 1", "M: one", 5, "must be a number"),
    ("M: 1", "M: 1\nwhatever: 2", 6, "unknown key"),
    ("  tol: 1e-10", "  tol: -1", 12, "positive"),
])
def test_semantic_errors_are_line_anchored(tmp_path, old, new, line, message):
    path = write(tmp_path, PERIODIC.replace(old, new))
    with pytest.raises(SpecError) as info:
        cli.parse_spec(path)
    assert message in str(info.value)
    if line is not None:
        assert info.value.line == line


def test_yaml_syntax_error(tmp_path):
    with pytest.raises(SpecError) as info:
        cli.parse_spec(write(tmp_path, "order: 1\ninterval: [0, 1\n"))
    assert info.value.line is not None
    with pytest.raises(SpecError):
        cli.parse_spec(write(tmp_path, ""))
    with pytest.raises(SpecError):
        cli.parse_spec(tmp_path / "missing.yaml")


def test_check(capsys):
    code, out, _ = run(capsys, "check", "--spec", str(SPECS / "periodic.yaml"))
    assert code == 0
    lines = dict(line.split(": ") for line in out.strip().splitlines())
    assert lines["rank_precheck"] == "ok"
    assert float(lines["uniqueness_determinant"]) == pytest.approx(1 - math.exp(-1), abs=1e-10)
    assert float(lines["det(I-A)"]) == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("old, new, code", [
    ("deltas: [0.5]", "deltas: [1]", cli.EXIT_SPECTRAL),
    ("M: 1", "M: 0", cli.EXIT_RESONANT),
    ("deltas: [0.5]", "deltas: [0.5, 0.5]", cli.EXIT_SPEC),
])
def test_exit_codes(capsys, tmp_path, old, new, code):
    path = write(tmp_path, PERIODIC.replace(old, new))
    assert run(capsys, "check", "--spec", path)[0] == code


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        cli.main(["scan", "--grid", "3by4"])
    assert info.value.code == cli.EXIT_USAGE
    assert run(capsys, "check")[0] == cli.EXIT_USAGE


def test_eval_points_and_zero_delta(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--spec", str(SPECS / "periodic.yaml"))
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert float(rows[0]["G"]) == pytest.approx(G_periodic(0.5, 0.25, 1.0, 0.5), abs=1e-9)
    # delta = 0 reproduces g through the build CSV
    path = write(tmp_path, PERIODIC.replace("deltas: [0.5]", "deltas: [0]"))
    code, out, _ = run(capsys, "build", "--spec", path, "--out", str(tmp_path / "o"), "--grid", "5x5")
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "o" / "green.csv").open()))
    assert len(rows) == 25
    assert all(r["G"] == r["g"] for r in rows)
    meta = json.loads((tmp_path / "o" / "build.json").read_text())
    assert meta["det_I_minus_A"] == 1.0


def test_build_is_deterministic(capsys, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "build", "--spec", str(SPECS / "periodic.yaml"),
                   "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a" / "green.csv").read_bytes() == (tmp_path / "b" / "green.csv").read_bytes()


def test_output_directory_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert run(capsys, "build", "--spec", str(SPECS / "periodic.yaml"), "--grid", "3x3")[0] == 0
    assert (tmp_path / "env" / "green.csv").exists()


def test_solve_reports_residuals(capsys, tmp_path):
    code, out, _ = run(capsys, "solve", "--spec", str(SPECS / "dirichlet2.yaml"),
                       "--out", str(tmp_path))
    assert code == 0
    report = dict(line.split(": ") for line in out.strip().splitlines()[1:])
    assert float(report["max_boundary_residual"]) < 1e-10
    assert float(report["relative_ode_residual"]) < 1e-8
    rows = list(csv.DictReader((tmp_path / "solution.csv").open()))
    assert list(rows[0]) == ["t", "u0", "u1", "residual"]
    path = write(tmp_path, PERIODIC.replace('forcing: "1 + sin(3*t)"\n', ""))
    assert run(capsys, "solve", "--spec", path, "--out", str(tmp_path))[0] == cli.EXIT_SPEC


def test_scan_small_grid(capsys, tmp_path):
    code, out, _ = run(capsys, "scan", "--spec", str(SPECS / "periodic_scan.yaml"),
                       "--out", str(tmp_path), "--grid", "5x9")
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "scan.csv").open()))
    assert len(rows) == 45
    assert [float(r["M"]) for r in rows[:9]] == [-3.0] * 9
    summary = json.loads((tmp_path / "scan.json").read_text())
    assert summary["M_axis"] == [-3.0, -1.5, 0.0, 1.5, 3.0]
    assert "positive-lower" in summary["boundaries"]
    code, _, _ = run(capsys, "scan", "--spec", str(SPECS / "periodic.yaml"), "--out", str(tmp_path))
    assert code == cli.EXIT_SPEC


def test_fallback_requires_periodic_family(tmp_path):
    text = (SPECS / "periodic_scan.yaml").read_text().replace('["0"]', '["t"]')
    with pytest.raises(SpecError) as info:
        cli.parse_spec(write(tmp_path, text))
    assert "periodic-oracle" in str(info.value)


def test_verify_oracle(capsys, tmp_path):
    code, out, _ = run(capsys, "verify-oracle", "--grid", "11x11")
    assert code == 0 and out.splitlines()[-1].startswith("PASS")
    assert len(out.splitlines()) == len(cli.ORACLE_CASES) + 1
    strict = PERIODIC + "verify:\n  threshold: 1e-30\n  cases: [[1, 0.5]]\n"
    code, out, _ = run(capsys, "verify-oracle", "--spec", write(tmp_path, strict))
    assert code == cli.EXIT_TOLERANCE and "FAIL" in out


def test_oracle_errors_helper():
    errs = cli.oracle_errors(((1.0, 0.5),), (5, 5))
    assert len(errs) == 1 and errs[0] < 1e-9
    assert np.isfinite(errs[0])
