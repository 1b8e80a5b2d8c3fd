import csv
import json
import subprocess
import sys

import pytest

from defensive_forecasting import ForecastState, SolverFailure
from defensive_forecasting.harness import bench, cli


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"stream": {"kind": "bernoulli", "theta": 0.6}, "seed": 1, "skeptics": ["mixture"]}))
    return p


def test_forecast_writes_one_line_per_round(tmp_path, cfg_file, capsys):
    out = tmp_path / "t.jsonl"
    assert cli.main(["forecast", "--config", str(cfg_file), "--rounds", "100", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 100
    assert "100 rounds" in capsys.readouterr().out


def test_unknown_subcommand(capsys):
    assert cli.main(["fly"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err


def test_missing_subcommand(capsys):
    assert cli.main([]) == 1
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["forecast", "--config", "/nonexistent.json"],
        ["decide", "--rounds", "5"],
        ["decide", "--loss", "hinge", "--rounds", "5"],
        ["forecast", "--rounds", "-3"],
        ["forecast", "--kernel", "{not json"],
        ["metrics", "--transcript", "/nonexistent.jsonl"],
        ["bench", "--suite", "everything"],
        ["forecast", "--rounds", "ten"],
    ],
)
def test_input_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(argv) == 1


def test_solver_failure_exits_2(tmp_path, monkeypatch):
    def broken(self, x, extra=None, hint=None):
        raise SolverFailure("no neutral forecast")

    monkeypatch.setattr(ForecastState, "defensive_forecast", broken)
    assert cli.main(["forecast", "--rounds", "3", "--out", str(tmp_path / "t.jsonl")]) == 2


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "runs"))
    assert cli.main(["forecast", "--rounds", "5", "--seed", "2"]) == 0
    assert (tmp_path / "runs" / "forecast-seed2.jsonl").exists()


def test_decide_and_metrics(tmp_path):
    out = tmp_path / "d.jsonl"
    cfg = tmp_path / "d.toml"
    cfg.write_text('rounds = 60\n[stream]\nkind = "logistic_rule"\nweights = [2.0]\n[benchmark]\nkind = "constant"\ngamma = 0.5\n')
    assert cli.main(["decide", "--config", str(cfg), "--loss", "absolute", "--out", str(out)]) == 0
    m = tmp_path / "m.csv"
    rule = json.dumps({"kind": "logistic", "weights": [2.0]})
    assert cli.main(["metrics", "--transcript", str(out), "--out", str(m), "--rule", rule, "--functions", "5"]) == 0
    rows = list(csv.DictReader(m.open()))
    metrics = {r["metric"] for r in rows}
    assert {"calibration_bin", "kernel_discrepancy", "capital_quadratic", "capital_merged", "regret"} <= metrics
    for r in rows:
        if r["metric"] in ("kernel_discrepancy", "regret"):
            assert float(r["statistic"]) <= float(r["bound"])


def test_test_mode_with_constant_forecaster(tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"stream": "alternating_parity", "forecaster": {"kind": "constant", "p": [0.5, 0.5]}}))
    out = tmp_path / "t.jsonl"
    assert cli.main(["test", "--config", str(cfg), "--rounds", "40", "--out", str(out)]) == 0
    m = tmp_path / "m.csv"
    assert cli.main(["metrics", "--transcript", str(out), "--out", str(m)]) == 0
    bins = [r for r in csv.DictReader(m.open()) if r["metric"] == "calibration_bin"]
    assert len(bins) == 1 and float(bins[0]["statistic"]) == 0.0


def test_bench_runs_the_discrepancy_suite(tmp_path, capsys):
    assert cli.main(["bench", "--suite", "discrepancy", "--rounds", "150", "--out", str(tmp_path)]) == 0
    assert "PASS  discrepancy" in capsys.readouterr().out
    rows = list(csv.DictReader((tmp_path / "bench-discrepancy.csv").open()))
    assert len(rows) == 22  # one row per run, worst of its 20 functions
    assert all(float(r["ratio"]) < 1 for r in rows)


def test_suite_aliases_resolve_to_known_suites():
    assert set(bench.ALIASES.values()) <= set(bench.SUITE_NAMES)


def test_bench_failure_exits_3(tmp_path, monkeypatch):
    monkeypatch.setattr(bench, "run_suite", lambda name, rounds=None, seed=0, runs=None: bench.SuiteResult(name, False, "forced"))
    assert cli.main(["bench", "--suite", "choice", "--out", str(tmp_path)]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "defensive_forecasting", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr
