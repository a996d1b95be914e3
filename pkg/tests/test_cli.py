import csv
import subprocess
import sys

import pytest

from lipglobal.cli import build_parser, emit_plot_data, resolve_problem_path, run
from lipglobal.solve import RootSet


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _run(tmp_path, *argv):
    return run([*argv, "--out", str(tmp_path), "--threads", "1"])


def test_solve_cubic_exit_zero(tmp_path, capsys):
    assert _run(tmp_path, "solve", "--y", "2", "cubic") == 0
    rows = _rows(tmp_path / "roots.csv")
    assert rows[0] == ["y1", "x1", "residual", "stationarity", "basin_count", "break_flag"]
    assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-9)
    assert "verdict: unique" in capsys.readouterr().out


def test_twowell_exit_one(tmp_path):
    assert _run(tmp_path, "solve", "twowell") == 1
    st = _rows(tmp_path / "stationary.csv")
    assert st[0][-1] == "sigma_min" and len(st) == 2
    assert _run(tmp_path, "check", "twowell") == 1
    assert "rank-deficient-witness" in (tmp_path / "check.txt").read_text()


def test_none_found_exit_three(tmp_path):
    prob = tmp_path / "noroot.prob"
    prob.write_text("n = 1\nbox = [-3, 3]\nF1 = x1*x1 + 1\n")
    assert _run(tmp_path, "solve", str(prob), "--set", "multistart=8") == 3


def test_usage_errors_exit_two(tmp_path):
    assert _run(tmp_path, "solve", "nosuch") == 2
    assert _run(tmp_path, "solve", "cubic", "--set", "bogus=1") == 2
    assert run(["frobnicate"]) == 2
    bad = tmp_path / "bad.prob"
    bad.write_text("n = 1\nF1 = x1 +\n")
    assert _run(tmp_path, "solve", str(bad)) == 2


def test_manifest(tmp_path):
    _run(tmp_path, "solve", "--y", "0", "cubic", "--seed", "3", "--set", "multistart=8")
    items = dict(line.split("=", 1) for line in (tmp_path / "manifest.txt").read_text().splitlines())
    assert items["subcommand"] == "solve" and items["problem"] == "cubic"
    assert items["seed"] == "3" and items["set.multistart"] == "8" and items["threads"] == "1"
    assert "timestamp" not in items


def test_reproducible_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["invert", "fa", "--target=3,9", "--out", str(a), "--threads", "1", "--set", "multistart=8"])
    run(["invert", "fa", "--target=3,9", "--out", str(b), "--threads", "2", "--set", "multistart=8"])
    assert (a / "roots.csv").read_bytes() == (b / "roots.csv").read_bytes()
    assert float(_rows(a / "roots.csv")[1][2]) == pytest.approx(2.0, abs=1e-8)


def test_atlas(tmp_path):
    assert _run(tmp_path, "atlas", "cubic", "--from", "-1", "--to", "1", "--samples", "11", "--set", "multistart=8") == 0
    rows = _rows(tmp_path / "atlas.csv")
    assert rows[0] == ["y", "x", "residual", "ratio", "break"] and len(rows) == 12
    assert "breaks = 0" in (tmp_path / "atlas.txt").read_text()


def test_algebraic(tmp_path):
    assert _run(tmp_path, "algebraic", "example1") == 0
    text = (tmp_path / "algebraic.txt").read_text()
    assert "claim = evidenced" in text and "theorem = theorem7" in text


def test_mpass(tmp_path):
    assert _run(tmp_path, "mpass", "twowell", "--x1", "-1", "--x2", "1") == 0
    text = (tmp_path / "mpass.txt").read_text()
    assert "verdict = saddle-found" in text and "contradiction = False" in text
    assert _rows(tmp_path / "path.csv")[0] == ["bead", "x1", "value"]


def test_compare_small(tmp_path):
    prob = tmp_path / "ident.prob"
    prob.write_text("n = 2\nbox = [-2, 2] x [-2, 2]\nF1 = x1\nF2 = x2\n")
    assert _run(tmp_path, "compare", str(prob), "--targets", "4", "--y-count", "1") == 0
    assert _rows(tmp_path / "pourciau.csv")[0] == ["t", "value", "cumulative_integral"]
    assert _rows(tmp_path / "hadamard_levy.csv")[0] == ["r", "value", "cumulative_integral"]
    assert len(_rows(tmp_path / "inversions.csv")) == 5


def test_fixtures_list_and_verify(tmp_path, capsys):
    assert _run(tmp_path, "fixtures") == 0
    assert "twowell" in capsys.readouterr().out
    assert _run(tmp_path, "fixtures", "--verify", "--only", "cubic,twowell") == 0
    lines = (tmp_path / "verify.txt").read_text().splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)
    assert _run(tmp_path, "fixtures", "--verify", "--only", "nosuch") == 2


def test_empty_rootset_header(tmp_path):
    import numpy as np

    rs = RootSet(np.array([1.0]), (), (), 4, 4, "none-found")
    emit_plot_data(rs, tmp_path / "r.csv")
    assert _rows(tmp_path / "r.csv") == [["y1", "residual", "stationarity", "basin_count", "break_flag"]]
    with pytest.raises(TypeError):
        emit_plot_data(object(), tmp_path / "x.csv")


def test_resolve_fixture_name():
    assert resolve_problem_path("fa").name == "fa.prob"
    assert build_parser().parse_args(["solve", "cubic", "--y=-1"]).y == [-1.0]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lipglobal", "--version"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0 and proc.stdout.startswith("lipglobal")
