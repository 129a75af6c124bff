import csv
import json
import os
import re

import pytest

from carnot import cli
from carnot.config import ConfigError, ExperimentConfig, build_config


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _files(d):
    return sorted(os.listdir(d))


def test_group_check_runs(tmp_path):
    out = tmp_path / "g"
    assert cli.main(["group-check", "--group", "h1", "--trials", "1000", "--out", str(out)]) == 0
    assert {"summary.txt", "report.json", "group_check.csv"} <= set(_files(out))
    text = (out / "summary.txt").read_text()
    assert "associativity" in text
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "ok" and rep["checks"]["associativity"] is True
    assert rep["csv_columns"]["group_check.csv"] == ["check", "value", "tolerance", "pass"]


def test_summary_lines_cite_config_hash(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["taylor", "--group", "engel", "--out", str(out)]) == 0
    digest = json.loads((out / "report.json").read_text())["config_hash"]
    lines = (out / "summary.txt").read_text().splitlines()
    assert lines and all(line.startswith(f"[{digest}] ") for line in lines)


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["solve", "--group", "h1", "--rhs", "holder:0.5", "--n", "17"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert _files(a) == _files(b)
    for name in _files(a):
        if name == "report.json":
            ra, rb = json.loads(_read(a / name)), json.loads(_read(b / name))
            ra["config"].pop("out"), rb["config"].pop("out")
            assert ra == rb
        else:
            assert _read(a / name) == _read(b / name)


def test_rerun_into_same_directory_replaces_it(tmp_path):
    out = tmp_path / "same"
    args = ["group-check", "--trials", "50", "--out", str(out)]
    assert cli.main(args) == 0
    first = {n: _read(out / n) for n in _files(out)}
    assert cli.main(args) == 0
    assert first == {n: _read(out / n) for n in _files(out)}


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--n", "3"],
        ["solve", "--group", "sl2"],
        ["solve", "--rhs", "holder:2"],
        ["frobnicate"],
        ["report"],
        ["cascade", "--kmax", "-1"],
    ],
)
def test_config_errors_exit_2_without_artifacts(tmp_path, argv):
    out = tmp_path / "bad"
    assert cli.main(argv + ["--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".carnot-")]


def test_malformed_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"group": "h1", "n": ')
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    cfg.write_text('{"group": "h1", "bogus": 1}')
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_CONFIG
    cfg.write_text('{"command": "taylor"}')
    assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"group": "engel", "trials": 20, "seed": 3}))
    out = tmp_path / "o"
    assert cli.main(["group-check", "--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["group"] == "engel" and rep["config"]["seed"] == 5


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise cli.SolverError("no convergence", [1.0])

    monkeypatch.setitem(cli.RUNNERS, "solve", boom)
    out = tmp_path / "s"
    assert cli.main(["solve", "--out", str(out)]) == cli.EXIT_SOLVER
    assert not out.exists()


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "group-check",
                        lambda cfg: cli.RunResult({"value": 1.0}, {"associativity": False}))
    out = tmp_path / "v"
    assert cli.main(["group-check", "--out", str(out)]) == cli.EXIT_INVARIANT
    rep = json.loads((out / "report.json").read_text())
    assert rep["status"] == "invariant violation"
    assert "check associativity: FAIL" in (out / "summary.txt").read_text()


def test_schauder_writes_pair_csv(tmp_path):
    out = tmp_path / "sch"
    assert cli.main(["schauder", "--group", "h1", "--rhs", "holder:0.5", "--n", "17",
                     "--trials", "40", "--out", str(out)]) == 0
    with open(out / "pairs.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 41 and "lhs" in rows[0] and "rhs_holder" in rows[0]
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["constants"]["holder"] > 0
    assert rep["csv_columns"]["pairs.csv"] == rows[0]


def test_cascade_and_report(tmp_path):
    c = tmp_path / "c"
    assert cli.main(["cascade", "--n", "11", "--kmax", "3", "--out", str(c)]) == 0
    assert {"levels.csv", "split.csv"} <= set(_files(c))
    g = tmp_path / "g"
    assert cli.main(["group-check", "--trials", "30", "--out", str(g)]) == 0
    r = tmp_path / "r"
    assert cli.main(["report", "--inputs", str(c), str(g), "--out", str(r)]) == 0
    rep = json.loads((r / "report.json").read_text())
    assert set(rep["results"]["runs"]) == {"c", "g"}
    assert rep["checks"]["all_runs_ok"] is True
    assert "runs.csv" in _files(r)


def test_default_output_directory_uses_digest(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(["group-check", "--trials", "10"]) == 0
    (name,) = os.listdir(tmp_path / "runs")
    assert re.fullmatch(r"group-check-[0-9a-f]{12}", name)


def test_config_digest_ignores_output():
    a = build_config("solve", {"n": 17}, {"out": "x"})
    b = build_config("solve", {"n": 17}, {"out": "y"})
    assert a.digest() == b.digest()
    assert a.digest() != build_config("solve", {"n": 19}).digest()
    with pytest.raises(ConfigError):
        ExperimentConfig(command="solve", n=True)
