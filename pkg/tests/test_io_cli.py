import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erfsmooth.cli import run_cli
from erfsmooth.errors import ParseError
from erfsmooth.io import (
    format_float,
    read_matrix,
    read_records,
    read_vector,
    write_matrix,
    write_records,
    write_trace,
    write_vector,
)
from erfsmooth.problems import ImageDemoRow, PathRecord, SweepRow


def test_matrix_round_trip_bit_identical(tmp_path):
    M = np.random.default_rng(0).standard_normal((10, 7)) * 10.0 ** np.arange(-3, 4)
    write_matrix(tmp_path / "m.mtx", M)
    assert np.array_equal(read_matrix(tmp_path / "m.mtx"), M)


@settings(max_examples=100)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(v):
    assert float(format_float(v)) == v


def test_one_by_one(tmp_path):
    f = tmp_path / "a.mtx"
    f.write_text("%%MatrixMarket matrix array real general\n1 1\n2.5\n")
    assert np.array_equal(read_matrix(f), np.array([[2.5]]))


def test_vector_round_trip(tmp_path):
    v = np.random.default_rng(1).standard_normal(13)
    write_vector(tmp_path / "v.mtx", v, comment="tau = 0.5")
    assert np.array_equal(read_vector(tmp_path / "v.mtx"), v)


def test_vector_rejects_matrix(tmp_path):
    write_matrix(tmp_path / "m.mtx", np.ones((2, 3)))
    with pytest.raises(ParseError):
        read_vector(tmp_path / "m.mtx")


def test_complex_field_rejected(tmp_path):
    f = tmp_path / "c.mtx"
    f.write_text("%%MatrixMarket matrix array complex general\n1 1\n1 2\n")
    with pytest.raises(ParseError, match="complex") as info:
        read_matrix(f)
    assert info.value.line == 1


@pytest.mark.parametrize(
    "text,line",
    [
        ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n", 5),
        ("%%MatrixMarket matrix array real general\n2 x\n1\n", 2),
        ("%%MatrixMarket matrix array real general\n1 1\nabc\n", 3),
        ("hello\n1 1\n1\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
    ],
)
def test_malformed_files_report_line(tmp_path, text, line):
    f = tmp_path / "bad.mtx"
    f.write_text(text)
    with pytest.raises(ParseError) as info:
        read_matrix(f)
    assert info.value.line == line
    assert f"bad.mtx:{line}:" in str(info.value)


def test_coordinate_formats(tmp_path):
    f = tmp_path / "c.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real general\n% note\n2 3 2\n1 1 1.5\n2 3 -2\n")
    assert np.array_equal(read_matrix(f), np.array([[1.5, 0, 0], [0, 0, -2.0]]))
    f.write_text("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 1 4\n")
    assert np.array_equal(read_matrix(f), np.array([[1.0, 4.0], [4.0, 0.0]]))
    f.write_text("%%MatrixMarket matrix coordinate integer skew-symmetric\n2 2 1\n2 1 3\n")
    assert np.array_equal(read_matrix(f), np.array([[0.0, -3.0], [3.0, 0.0]]))


def test_missing_file_mentions_path(tmp_path):
    with pytest.raises(OSError, match="nope.mtx"):
        read_matrix(tmp_path / "nope.mtx")


def _path_record(pe=1.5):
    return PathRecord(tau=0.1, residual_norm=0.2, percent_error=pe, f1_value=1 / 3, iterations=50,
                      wall_seconds=0.01, solution=np.zeros(2))


def test_csv_one_record_two_lines(tmp_path):
    write_records([_path_record()], tmp_path / "p.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 2


def test_csv_round_trip_exact(tmp_path):
    recs = [_path_record(), _path_record(None)]
    write_records(recs, tmp_path / "p.csv")
    back = read_records(tmp_path / "p.csv")
    assert back[0]["f1_value"] == 1 / 3 and back[0]["iterations"] == 50
    assert back[1]["percent_error"] is None
    assert (tmp_path / "p.csv").read_text().splitlines()[2].split(",")[2] == ""
    write_records([SweepRow(5, 0.1, "cg", math.nan)], tmp_path / "s.csv")
    assert math.isnan(read_records(tmp_path / "s.csv")[0]["median_min_percent_error"])
    write_records([ImageDemoRow("fista", 12.5, 0.01, np.zeros(2))], tmp_path / "i.csv")
    assert read_records(tmp_path / "i.csv") == [{"trial": 0, "method": "fista", "percent_error": 12.5, "tau": 0.01}]


def test_trace_csv(tmp_path):
    write_trace([{"iteration": 0, "f1_value": 2.0}], tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,sigma") and lines[1].startswith("0,,")


def test_write_failure_reports_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_records([_path_record()], tmp_path / "missing" / "p.csv")


SMALL = ["--m", "40", "--n", "40", "--nnz", "4", "--tau-points", "6"]


def test_generate_and_solve_from_files(tmp_path):
    assert run_cli(["generate", "--m", "30", "--n", "20", "--nnz", "3", "--seed", "4", "--out", str(tmp_path)]) == 0
    A = read_matrix(tmp_path / "A.mtx")
    assert A.shape == (30, 20) and np.count_nonzero(read_vector(tmp_path / "x.mtx")) == 3
    out = tmp_path / "solve"
    argv = ["solve", "--A", str(tmp_path / "A.mtx"), "--b", str(tmp_path / "b.mtx"), "--iters", "10", "--out", str(out)]
    assert run_cli(argv) == 0
    assert read_vector(out / "solution.mtx").shape == (20,)
    assert len(read_records(out / "trace.csv")) == 10


@pytest.mark.parametrize("solver", ["sd", "cg", "cg-newton", "ista", "fista"])
def test_solve_all_solvers(tmp_path, solver):
    assert run_cli(["solve", *SMALL[:6], "--solver", solver, "--iters", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trace.csv").exists()


def test_path_command(tmp_path):
    argv = ["path", "--m", "100", "--n", "100", "--nnz", "10", "--out", str(tmp_path)]
    assert run_cli(argv) == 0
    rows = read_records(tmp_path / "path.csv")
    assert len(rows) == 30
    taus = [r["tau"] for r in rows]
    assert all(b < a for a, b in zip(taus, taus[1:]))


def test_path_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run_cli(["path", *SMALL, "--seed", "3", "--out", str(tmp_path / d)]) == 0
    strip = lambda d: [{k: v for k, v in r.items() if k != "wall_seconds"} for r in read_records(tmp_path / d / "path.csv")]
    assert strip("a") == strip("b")


def test_sweep_matches_path_minimum(tmp_path):
    from erfsmooth.problems import derive_seed

    sweep = ["sweep", *SMALL, "--nnz-grid", "4", "--noise-grid", "0.1", "--solvers", "cg", "--trials", "1",
             "--seed", "7", "--out", str(tmp_path / "s")]
    assert run_cli(sweep) == 0
    row = read_records(tmp_path / "s" / "sweep.csv")
    assert len(row) == 1
    seed = derive_seed(7, 0, 0)
    path = ["path", *SMALL, "--noise", "0.1", "--seed", str(seed), "--out", str(tmp_path / "p")]
    assert run_cli(path) == 0
    best = min(r["percent_error"] for r in read_records(tmp_path / "p" / "path.csv"))
    assert row[0]["median_min_percent_error"] == best


def test_image_demo_command(tmp_path):
    write_matrix(tmp_path / "img.mtx", np.diag([1.0, 0, 2.0, 0]))
    argv = ["image-demo", "--image", str(tmp_path / "img.mtx"), "--m", "30", "--tau-points", "5", "--out", str(tmp_path / "o")]
    assert run_cli(argv) == 0
    rows = read_records(tmp_path / "o" / "image_demo.csv")
    assert [r["method"] for r in rows] == ["fista", "cg-p1", "cg-newton-p1", "cg-p0.83"]
    assert read_matrix(tmp_path / "o" / "image_fista.mtx").shape == (4, 4)


@pytest.mark.parametrize(
    "argv",
    [
        ["path", "--bogus"],
        ["path", "--p", "1.5"],
        ["path", "--alpha", "1.2"],
        ["path", "--tau-points", "1"],
        ["path", "--nnz", "500"],
        ["solve", "--tau", "-1"],
        ["solve", "--kind", "conv-phi-hat", "--p", "0.5"],
        ["sweep", "--trials", "0"],
        ["solve", "--A", "/nonexistent/A.mtx", "--b", "/nonexistent/b.mtx"],
    ],
)
def test_bad_arguments_fail_without_output(tmp_path, capsys, argv):
    out = tmp_path / "out"
    assert run_cli([*argv, "--out", str(out)]) != 0
    assert capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_help_shows_defaults(capsys):
    assert run_cli(["path", "--help"]) == 0
    text = capsys.readouterr().out
    assert "default: 0.8" in text and "default: 30" in text
