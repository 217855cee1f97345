import csv
from importlib import resources
import subprocess
import sys

import numpy as np
import pytest

from pbj import analysis, cli
from pbj.analysis import build_design, run_analysis
from pbj.datasets import SIGNAL_REGIONS, data_path, load_regions
from pbj.errors import ParseError, ValidationError
from pbj.io import fmt_p, load_matrix, read_binary, save_matrix, write_binary


def read_report(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def small_data(tmp_path):
    rng = np.random.default_rng(0)
    n, V = 24, 6
    X = np.column_stack([rng.uniform(20, 60, n), (np.arange(n) % 2).astype(float)])
    Y = rng.standard_normal((n, V))
    Y[:, 2] += 2.0 * X[:, 1]
    save_matrix(tmp_path / "Y.csv", Y, [f"loc{j}" for j in range(V)])
    save_matrix(tmp_path / "X.csv", X, ["age", "group"])
    return tmp_path, Y, X


# ------------------------------------------------------------------- file I/O

def test_csv_round_trip(tmp_path):
    M = np.array([[1.5, -2.0], [0.1, 1e-300]])
    save_matrix(tmp_path / "m.csv", M, ["a", "b"])
    got, labels = load_matrix(tmp_path / "m.csv")
    assert labels == ["a", "b"]
    np.testing.assert_array_equal(got, M)


def test_tsv_parse(tmp_path):
    (tmp_path / "m.tsv").write_text("x\ty\n1\t2\n3\t4.5\n")
    got, labels = load_matrix(tmp_path / "m.tsv")
    assert labels == ["x", "y"]
    np.testing.assert_array_equal(got, [[1, 2], [3, 4.5]])


def test_ragged_row_reports_location(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(ParseError) as exc:
        load_matrix(tmp_path / "bad.csv")
    assert exc.value.row == 3
    assert "row 3" in str(exc.value)


def test_non_numeric_cell_reports_location(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n3,x\n")
    with pytest.raises(ParseError) as exc:
        load_matrix(tmp_path / "bad.csv")
    assert (exc.value.row, exc.value.column) == (3, 2)


def test_binary_round_trip(tmp_path):
    M = np.random.default_rng(1).standard_normal((7, 3))
    write_binary(tmp_path / "m.bin", M, magic=b"PERM")
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:4] == b"PERM" and len(raw) == 16 + 7 * 3 * 8
    got, magic = read_binary(tmp_path / "m.bin")
    assert magic == b"PERM"
    np.testing.assert_array_equal(got, M)
    got2, labels = load_matrix(tmp_path / "m.bin")
    assert labels == ["c0", "c1", "c2"]


def test_binary_bad_magic(tmp_path):
    (tmp_path / "m.bin").write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ParseError):
        read_binary(tmp_path / "m.bin")


def test_fmt_p():
    assert fmt_p(1 / 3) == "0.333333"
    assert fmt_p(0.0) == "0"


# ------------------------------------------------------------------ analysis

def test_intercept_added_once():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    d = build_design(X, ["one", "x"], ["x"])
    assert d.names0 == ("one",)
    d = build_design(np.arange(5.0)[:, None] ** 2, ["x2"], ["x2"])
    assert d.names0 == ("(intercept)",)


def test_unknown_tested_column():
    with pytest.raises(ValidationError):
        build_design(np.ones((5, 1)), ["a"], ["b"])


def test_bonferroni_only_builds_no_ensemble(monkeypatch, small_data):
    _, Y, X = small_data

    def boom(*a, **k):
        raise AssertionError("ensemble requested")

    monkeypatch.setattr(analysis, "iter_null", boom)
    monkeypatch.setattr(analysis, "iter_permutation_null", boom)
    res = run_analysis(Y, build_design(X, ["age", "group"], ["group"]), methods=["bonferroni"])
    assert res.seed is None and res.B is None


def test_degenerate_location_reported(small_data):
    _, Y, X = small_data
    d = build_design(X, ["age", "group"], ["group"])
    Y = np.column_stack([Y, d.X @ np.array([1.0, 0.5, 2.0])])
    res = run_analysis(Y, d, methods=["holm", "pbj-sd"], B=200, seed=1)
    assert res.degenerate.tolist() == [False] * 6 + [True]
    assert res.adjusted["pbj-sd"].p_adj[-1] == 1.0 and res.adjusted["holm"].p_adj[-1] == 1.0


def test_step_down_warns_when_B_small(small_data):
    _, Y, X = small_data
    with pytest.warns(UserWarning):
        run_analysis(Y, build_design(X, ["age", "group"], ["group"]), methods=["pbj-sd"], B=3,
                     seed=0)


def test_bundled_dataset_signal_regions_rejected():
    Y, ylab, X, xlab = load_regions()
    assert Y.shape == (200, 112)
    res = run_analysis(Y, build_design(X, xlab, ["group"]), methods=["holm", "pbj-sd"],
                       B=1000, seed=20, location_ids=ylab)
    for m in ("holm", "pbj-sd"):
        rejected = np.flatnonzero(res.adjusted[m].rejected)
        assert set(SIGNAL_REGIONS) <= set(rejected.tolist())
        assert len(rejected) <= len(SIGNAL_REGIONS) + 1


# ----------------------------------------------------------------------- CLI

def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_cli_analyze_matches_library(small_data):
    tmp, Y, X = small_data
    out = tmp / "r.csv"
    code = run_cli("analyze", "--outcome", tmp / "Y.csv", "--design", tmp / "X.csv",
                   "--test", "group", "--method", "pbj-sd,holm,perm-ss", "--B", 300,
                   "--seed", 7, "--out", out)
    assert code == 0
    rows = read_report(out)
    assert list(rows[0]) == ["location", "F", "Z", "p_raw", "p_pbj-sd", "p_holm", "p_perm-ss",
                             "degenerate"]
    lib = run_analysis(Y, build_design(X, ["age", "group"], ["group"]),
                       methods=["pbj-sd", "holm", "perm-ss"], B=300, seed=7,
                       location_ids=[f"loc{j}" for j in range(6)])
    for row in rows:
        v = int(row["location"][3:])
        assert row["F"] == fmt_p(lib.F[v])
        for m in ("pbj-sd", "holm", "perm-ss"):
            assert row[f"p_{m}"] == fmt_p(lib.adjusted[m].p_adj[v])
    p_first = [float(r["p_pbj-sd"]) for r in rows]
    assert p_first == sorted(p_first)
    assert rows[0]["location"] == "loc2"


def test_cli_reruns_are_byte_identical(small_data):
    tmp, _, _ = small_data
    outs = []
    for i, threads in enumerate((1, 3)):
        out = tmp / f"r{i}.csv"
        run_cli("analyze", "--outcome", tmp / "Y.csv", "--design", tmp / "X.csv", "--test", 1,
                "--method", "pbj-ss,perm-sd", "--B", 500, "--seed", 99, "--threads", threads,
                "--out", out)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_missing_seed_is_printed(small_data, capsys):
    tmp, _, _ = small_data
    run_cli("analyze", "--outcome", tmp / "Y.csv", "--design", tmp / "X.csv", "--test", "group",
            "--method", "pbj-ss", "--B", 50, "--out", tmp / "r.csv")
    err = capsys.readouterr().err
    assert err.startswith("seed: ")
    int(err.split()[1])


@pytest.mark.parametrize("args,code", [
    (["--method", "nope"], 2),
    (["--test", "missing"], 2),
    (["--alpha", "1.5"], 2),
    (["--B", "0", "--method", "pbj-sd"], 2),
])
def test_cli_validation_exit_codes(small_data, args, code):
    tmp, _, _ = small_data
    base = ["analyze", "--outcome", tmp / "Y.csv", "--design", tmp / "X.csv", "--test", "group",
            "--seed", 1, "--out", tmp / "r.csv"]
    # later duplicates override the defaults above
    assert run_cli(*base, *args) == code


def test_cli_missing_file_is_io_error(tmp_path):
    assert run_cli("analyze", "--outcome", tmp_path / "none.csv", "--design",
                   tmp_path / "none2.csv", "--test", "g", "--out", tmp_path / "r.csv") == 3


def test_cli_ragged_input_exit_code(small_data, capsys):
    tmp, _, _ = small_data
    (tmp / "bad.csv").write_text("a,b\n1,2\n3\n")
    assert run_cli("analyze", "--outcome", tmp / "bad.csv", "--design", tmp / "X.csv",
                   "--test", "group", "--out", tmp / "r.csv") == 2
    assert "row 3" in capsys.readouterr().err


def test_cli_argparse_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze"])
    assert exc.value.code == 2


def test_cli_simulate_zero_sims(tmp_path):
    assert run_cli("simulate", "--nsims", 0, "--out", tmp_path / "s.csv") == 2


def test_cli_simulate_preset_text(tmp_path):
    out = tmp_path / "t.txt"
    code = run_cli("simulate", "--preset", "table-n100", "--V", "10,20", "--nsims", 2, "--B", 20,
                   "--method", "holm-Z,pbj-Z-SigmaHat", "--seed", 4, "--format", "text",
                   "--out", out)
    assert code == 0
    text = out.read_text()
    assert text.startswith("# preset=table-n100")
    assert "seed=4" in text
    assert "FWER (%)" in text


def test_cli_simulate_csv_header_echo(tmp_path):
    out = tmp_path / "s.csv"
    assert run_cli("simulate", "--n", 20, "--V", 15, "--covariance", "negAR1", "--nsims", 3,
                   "--B", 20, "--method", "holm-T,perm-T", "--seed", 2, "--out", out) == 0
    lines = out.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    assert any("covariance=negAR1" in c for c in comments)
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0].startswith("method,n,V,covariance,fwer")
    assert len(body) == 3


def test_cli_simulate_injection(tmp_path):
    with resources.as_file(data_path("regions_outcome.csv")) as p:
        out = tmp_path / "inj.csv"
        assert run_cli("simulate", "--study", "injection", "--base-data", p, "--sizes", "40",
                       "--nsims", 2, "--B", 30, "--method", "holm,pbj-sd", "--seed", 1,
                       "--out", out) == 0
    body = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(body) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pbj", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "analyze" in proc.stdout
