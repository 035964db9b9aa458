import csv
import dataclasses
import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from degenmax import fd_solver
from degenmax.cli import main

ROOT = Path(__file__).resolve().parents[1]
KUMMER = str(resources.files("degenmax").joinpath("data/kummer.json"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_bundled_kummer(tmp_path, capsys):
    code, _, _ = run(capsys, "solve", "--problem", KUMMER, "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "solution.csv")))
    assert len(rows) - 1 == 129
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["m_matrix_ok"] is True


def test_special_eval_at_origin(capsys):
    code, out, _ = run(capsys, "special", "eval", "--fn", "M", "--a", "1", "--b", "1", "--x", "0")
    assert code == 0 and out.strip() == "1"


def test_special_classify(capsys):
    code, out, _ = run(capsys, "special", "classify", "--a", "0.5", "--b", "0.5")
    assert code == 0 and "C0_not_C1" in out


def test_special_bad_parameters_exit_two(capsys):
    code, _, err = run(capsys, "special", "eval", "--fn", "U", "--a", "0.5", "--b", "2", "--x", "1")
    assert code == 2 and err


def test_missing_problem_file(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--problem", str(tmp_path / "absent.json"), "--out", str(tmp_path))
    assert code == 2 and "cannot read" in err


def test_bad_config_reports_line_and_column(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(
        '{\n  "domain": {"interval": [0, 1]},\n  "grid": {"cells": -3},\n'
        '  "operator": {"builtin": "kummer", "params": {"a_param": 1, "b_param": 1}}\n}\n'
    )
    code, _, err = run(capsys, "classify", "--problem", str(bad), "--out", str(tmp_path))
    assert code == 2
    assert "grid/cells" in err and "line 3, column 12" in err


def test_empty_suite_selection(tmp_path, capsys):
    code, _, err = run(capsys, "verify-suite", "--suite", "", "--out", str(tmp_path))
    assert code == 2 and "empty" in err


def test_unknown_suite_entry(tmp_path, capsys):
    code, _, _ = run(capsys, "verify-suite", "--suite", "3,nope", "--out", str(tmp_path))
    assert code == 2


def test_classify_writes_table(tmp_path, capsys):
    code, _, _ = run(capsys, "classify", "--problem", KUMMER, "--out", str(tmp_path))
    assert code == 0
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["degenerate"] == [0] and result["nondegenerate"] == [128]
    assert result["fichera"] == {"0": 0}


def test_parabolic_solve(tmp_path, capsys):
    code, _, _ = run(capsys, "solve", "--problem", str(ROOT / "configs/kummer_parabolic.json"), "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "solution.csv")))
    assert rows[0][0] == "t"
    assert len(rows) - 1 == 41 * 65


def test_obstacle_example(tmp_path, capsys):
    code, _, _ = run(capsys, "obstacle", "--problem", str(ROOT / "configs/heston_obstacle.json"), "--out", str(tmp_path))
    assert code == 0
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["converged"] is True
    header = next(csv.reader(open(tmp_path / "solution.csv")))
    assert header[-1] == "active"


def test_straighten_verify(tmp_path, capsys):
    cfg = str(ROOT / "configs/graph_straighten.json")
    code, _, _ = run(capsys, "transform", "--problem", cfg, "--map", "straighten", "--verify", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "coefficients.csv").exists()


def test_fast_suite_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(capsys, "verify-suite", "--suite", "fast", "--out", str(a), "--seed", "3")
    run(capsys, "verify-suite", "--suite", "fast", "--out", str(b), "--seed", "3")
    assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()


def _flip_drift(original):
    """Row assembly with the drift contribution negated: downwind instead of upwind."""

    def corrupted(coeffs, grid, node, kind, t):
        row, c, warn = original(coeffs, grid, node, kind, t)
        still = dataclasses.replace(coeffs, b=lambda *args: np.zeros(coeffs.dim))
        base, _, _ = original(still, grid, node, kind, t)
        flipped = {j: 2.0 * base.get(j, 0.0) - row.get(j, 0.0) for j in set(row) | set(base)}
        return flipped, c, warn

    return corrupted


def test_corrupted_upwind_sign_is_caught(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(fd_solver, "_spatial_row", _flip_drift(fd_solver._spatial_row))
    code, out, _ = run(capsys, "verify-suite", "--suite", "weak-max", "--out", str(tmp_path))
    assert code == 1
    line = next(l for l in out.splitlines() if l.startswith("FAIL"))
    assert "M-matrix" in line and " 6 " in line


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "degenmax", "special", "eval", "--fn", "M", "--a", "2", "--b", "3", "--x", "0"],
        capture_output=True,
        text=True,
        cwd=tmp_path,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "1"


def test_perturb_reports_failed_certificate(tmp_path, capsys):
    cfg = str(ROOT / "configs/perturb_half_plane.json")
    code, out, err = run(capsys, "perturb", "--problem", cfg, "--point", "0,0", "--out", str(tmp_path))
    # Au(0) = -b0 p > 0 for any field with p < 0, so A(u+w) < 0 cannot hold near the base point
    assert code == 1 and "A(u+w)" in out + err
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["Au_at_point"] > 0
    failures = result["certificate"]["failures"]
    assert failures and all(f.startswith("A(u+w)") for f in failures)
    assert (tmp_path / "v_field.csv").exists()


def test_kill_tangential_verify_names_the_failing_check(tmp_path, capsys):
    cfg = str(ROOT / "configs/heston_transform.json")
    code, out, _ = run(capsys, "transform", "--problem", cfg, "--map", "kill-tangential", "--verify", "--out", str(tmp_path))
    failing = [l for l in out.splitlines() if l.startswith("FAIL")]
    assert code == 1
    assert [l.split()[1].rstrip(":") for l in failing] == ["eigenvalues_preserved"]
    assert "PASS b_tilde_tangential_vanishes" in out
