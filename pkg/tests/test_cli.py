import io
import json
import subprocess
import sys

import pytest

from aptest import cli
from aptest.functions import PiecewiseConstantFn, save_function


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, [json.loads(line) for line in out.getvalue().splitlines()]


def test_intervals_with_target(tmp_path):
    path = tmp_path / "f.json"
    save_function(PiecewiseConstantFn.from_intervals([(0.2, 0.4)]), path)
    code, rows = run("test-intervals", "--d", "2", "--eps", "0.5", "--target", str(path), "--trials", "2")
    assert code == 0 and len(rows) == 2
    assert {"decision", "labels_used", "unlabeled_used", "statistic", "threshold"} <= set(rows[0])


def test_generated_kinds():
    code, rows = run("test-intervals", "--d", "2", "--eps", "0.25", "--kind", "far_fine", "--variant", "pairs")
    assert code == 0 and rows[0]["decision"] == "reject"
    code, rows = run("test-cluster", "--N", "10", "--eps", "0.5", "--kind", "far")
    assert rows[0]["decision"] == "reject"
    code, rows = run("test-disjoint", "--N", "10", "--eps", "0.5")
    assert rows[0]["decision"] == "accept"
    code, rows = run("test-margin", "--gamma", "0.2", "--eps", "0.25")
    assert rows[0]["decision"] == "accept"
    code, rows = run("test-ltf", "--n", "4", "--eps", "0.5", "--c-m1", "20", "--c-m2", "2", "--target", "random")
    assert rows[0]["decision"] == "reject"


def test_dimension_commands():
    code, rows = run("dimension", "passive", "--n", "64", "--q-max", "2", "--trials", "10")
    assert code == 0 and rows[0]["estimate"] == "passive"
    code, rows = run("dimension", "dictator-ratio", "--n", "64", "--q", "2", "--pool", "20", "--trials", "10")
    assert 0 <= rows[0]["pair_fraction"] <= 1
    code, rows = run("dimension", "randmat", "--n", "100", "--m", "5", "--t", "2", "--trials", "5")
    assert rows[0]["frequency"] == 1.0


def test_errors_exit_2(tmp_path, capsys):
    code, _ = run("test-intervals", "--d", "1", "--eps", "0.5", "--target", str(tmp_path / "missing.json"))
    assert code == 2
    code, _ = run("dimension", "passive", "--pi", "bogus", "--trials", "1")
    assert code == 2
    assert "aptest:" in capsys.readouterr().err


def test_bench_gate(tmp_path):
    cfg = {"tester": "cluster", "generator": {"kind": "pure"}, "params": {"N": 5, "eps": 0.5},
           "trials": 3, "seed": 1, "output": str(tmp_path / "out.jsonl")}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps([dict(cfg, gate={"accept_rate": 0.9}), dict(cfg, gate={"reject_rate": 0.9})]))
    code, rows = run("bench", str(path), "--workers", "1")
    assert code == 1
    assert [r["gate_passed"] for r in rows] == [True, False]
    assert (tmp_path / "out.csv").exists()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "aptest.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "test-intervals" in res.stdout
