import csv
import json

import numpy as np
import pytest

from fockfk import runner
from fockfk.runner import DEFAULT_CONFIG, ConfigError, Result, main, parse_config, run
from fockfk.stoch import TimeGrid, sample_paths


def _report(out):
    (path,) = out.glob("*/*/report.json")
    return json.loads(path.read_text()), path.parent


def test_defaults_parse():
    cp = parse_config("")
    assert cp["model"]["n_max"] == "3"
    assert parse_config(DEFAULT_CONFIG)["run"]["paths"] == "10000"


def test_malformed_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nseed = 1\n\n[model]\nK = 2\nomgea = 1, 2\n")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 6" in err and "omgea" in err


def test_unknown_section():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("[solver]\nx = 1\n")


def test_bad_value():
    with pytest.raises(ConfigError):
        parse_config("[model]\nK = 3\n")


def test_unknown_suite(tmp_path):
    assert main(["validate", "--suites", "nope", "--out", str(tmp_path)]) == 2


def test_schema(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert set(schema) == {"run_id", "seed", "config_echo", "suites"}


def test_empty_suite_list(tmp_path):
    assert run(DEFAULT_CONFIG, [], tmp_path, 1, plots=False) == 0
    rep, _ = _report(tmp_path)
    assert rep["suites"] == [] and rep["seed"] == 1


def test_zero_coupling_validate(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text("[model]\ncoupling = zero\n")
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep, outdir = _report(tmp_path / "o")
    assert rep["suites"] and all(s["status"] == "PASS" for s in rep["suites"])
    assert (outdir / "pull-through.png").exists()


def test_report_roundtrip(tmp_path):
    run(DEFAULT_CONFIG, ["weyl-vector"], tmp_path, 3, plots=False)
    rep, outdir = _report(tmp_path)
    text = (outdir / "report.json").read_text()
    assert json.dumps(json.loads(text), indent=2) + "\n" == text
    assert rep["suites"][0]["status"] == "PASS"
    assert rep["suites"][0]["runtime_s"] is None


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FOCKFK_SEED", "77")
    assert main(["validate", "--suites", "weyl-vector", "--out", str(tmp_path), "--no-plots"]) == 0
    assert _report(tmp_path)[0]["seed"] == 77


def _induced_failure(m, seed):
    # claims E[B_t^2] = t/2 for a Brownian motion from 0
    P = sample_paths("brownian", [0.0], TimeGrid(m.t, 4), 2000, seed)
    v = P.end[:, 0] ** 2
    lhs, se = float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))
    rhs = m.t / 2
    return Result("induced", "none", "PASS" if lhs <= rhs + 3 * se else "FAIL", lhs, rhs, se, "3 se")


def test_failure_witness(tmp_path, monkeypatch):
    monkeypatch.setitem(runner.SUITES, "induced", _induced_failure)
    assert run(DEFAULT_CONFIG, ["induced"], tmp_path, 5, plots=False) == 1
    (entry,) = _report(tmp_path)[0]["suites"]
    assert entry["status"] == "FAIL"
    assert entry["lhs"] > entry["rhs"] + 3 * entry["se"]


def test_crash_becomes_failure(tmp_path, monkeypatch):
    def boom(m, seed):
        raise RuntimeError("kaput")
    monkeypatch.setitem(runner.SUITES, "boom", boom)
    assert run(DEFAULT_CONFIG, ["boom"], tmp_path, 5, plots=False) == 1
    rep, outdir = _report(tmp_path)
    assert rep["suites"][0]["status"] == "FAIL"
    assert "kaput" in (outdir / "boom.detail.json").read_text()


def test_converge_csv(tmp_path):
    main(["converge", "--paths", "2000", "--steps", "100", "--out", str(tmp_path), "--no-plots"])
    _, outdir = _report(tmp_path)
    with open(outdir / "step-convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    ratios = [float(r["ratio"]) for r in rows if r["ratio"]]
    assert len(ratios) == 2 and all(1.5 <= r <= 2.5 for r in ratios)
