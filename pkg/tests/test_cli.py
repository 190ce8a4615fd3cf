import json

import pytest

from geolocal import ROOT, Lexicon
from geolocal.__main__ import EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, main

# ==============================================================================

def run(capsys, *argv) -> tuple:
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)

def test_term_table(capsys):
    code, report = run(capsys, "term-table", "--lattice", "3x3p")
    assert code == EXIT_OK
    assert report["l"] == 189
    assert report["schema_version"] == 3
    assert report["command"] == "term-table"
    assert len(report["content_hash"]) == 40

def test_simulate_zero_coeffs(capsys, tmp_path):
    fname = tmp_path / "zero.json"
    fname.write_text(json.dumps([0.] * 15))
    code, report = run(capsys, "simulate", "--coeffs", str(fname))
    assert code == EXIT_OK
    assert report["d_exact"] == pytest.approx(1., abs=1e-15)
    assert report["all_within"]

def test_simulate_sampled(capsys):
    code, report = run(capsys, "simulate", "--lattice", "1x3", "--seed", "7", "--m-sweep", "12")
    assert code == EXIT_OK
    assert 0. <= report["d_exact"] <= 1.
    assert len(report["taylor"]) == 12
    assert report["spectral_norm"] <= report["norm_bound"] + 1e-12

def test_simulate_input_mask(capsys):
    code, report = run(capsys, "simulate", "--input", "11")
    assert code == EXIT_OK
    assert report["input_mask"] == "11"

def test_output_file(capsys, tmp_path):
    fname = tmp_path / "out" / "table.json"
    code, report = run(capsys, "term-table", "--lattice", "1x2", "--output", str(fname))
    assert code == EXIT_OK and report is None
    assert json.loads(fname.read_text())["l"] == 15

def test_deterministic(capsys):
    _, first = run(capsys, "simulate", "--seed", "3")
    _, second = run(capsys, "simulate", "--seed", "3")
    assert first == second

def test_config_file(capsys, tmp_path):
    fname = tmp_path / "conf.json"
    fname.write_text(json.dumps({"term-table": {"lattice": "1x3"}}))
    _, report = run(capsys, "term-table", "--config", str(fname))
    assert report["l"] == 27
    _, report = run(capsys, "term-table", "--config", str(fname), "--lattice", "1x1")
    assert report["l"] == 3
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({"lattice": "2x2"}))
    _, report = run(capsys, "term-table", "--config", str(flat))
    assert report["lattice"]["rows"] == 2

@pytest.mark.parametrize("argv", [
    ["term-table", "--lattice", "2x3p"],
    ["term-table", "--config", "/nonexistent/conf.json"],
    ["simulate", "--input", "101"],
    ["rbw-test", "--nodes", "4", "--k", "2"],
    ["nonsense"],
    ["simulate", "--m", "many"],
])
def test_usage_errors(capsys, argv):
    code, _ = run(capsys, *argv)
    assert code == EXIT_USAGE

def test_rbw_exact(capsys):
    code, report = run(capsys, "rbw-test", "--trials", "20", "--epsilon", "0")
    assert code == EXIT_OK
    assert report["mode"] == "exact"
    assert report["pass_rate"] == 1.
    assert report["worst_coeff_error"] < 1e-8

def test_rbw_violate(capsys):
    code, report = run(capsys, "rbw-test", "--trials", "10", "--violate-k")
    assert code == EXIT_OK
    assert report["expected_failure"]
    assert report["mode"] == "violate"

def test_hiding_check(capsys):
    code, report = run(capsys, "hiding-check", "--trials", "50", "--samples", "200")
    assert code == EXIT_OK
    assert report["max_residual"] <= 1e-12

def test_hiding_check_zero_mask(capsys):
    code, report = run(capsys, "hiding-check", "--trials", "20", "--samples", "100", "--xmask", "000")
    assert code == EXIT_OK
    assert report["x_zero_trials"] == 20
    assert report["x_zero_max_residual"] == 0.

@pytest.mark.slow
def test_stats(capsys):
    code, report = run(capsys, "stats", "--l", "100", "--samples", "100000")
    assert code == EXIT_OK
    assert all(c["ok"] for c in report["checks"].values())

@pytest.mark.slow
def test_reduce(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    argv = ["reduce", "--no-extrapolation", "--truth", "--seed", "1", "--trace", str(trace)]
    code, report = run(capsys, *argv)
    assert code == EXIT_OK
    assert report["status"] == "ok"
    assert report["error"] <= 1e-4
    assert report["within_certified"]
    assert trace.read_text().startswith("stage,r,theta")
    _, again = run(capsys, *argv)
    assert again == report

def test_lexicon_keys():
    assert Lexicon.CONFIG == "config"
    assert Lexicon._tooltipsDB["config"].startswith("JSON configuration")

def test_commands_leave_package_untouched(capsys):
    run(capsys, "term-table", "--lattice", "1x2")
    assert not (ROOT / "command_list.json").exists()

def test_hiding_symmetry(capsys):
    code, report = run(capsys, "hiding-check", "--lattice", "1x2", "--trials", "5", "--samples", "2000")
    assert code == EXIT_OK
    assert report["symmetry"]["within_3sigma"]
