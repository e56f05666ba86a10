import csv
import json

import pytest

from pcsft.cli import run


@pytest.fixture
def b13(tmp_path):
    p = tmp_path / "b13.json"
    p.write_text(json.dumps({"B": [[1, 0], [0, 3]], "detector": {"threshold": 1.0, "crossing_rule": "bridge"},
                             "dt": 2.5e-4, "T": 2000.0, "n_trials": 4}))
    return p


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_born_end_to_end(b13, tmp_path):
    out = tmp_path / "born.csv"
    assert run(["born", "--config", str(b13), "--seed", "42", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# config: ")
    assert '"master_seed": 42' in text.splitlines()[0]
    rows = _rows(out)
    assert [r["channel"] for r in rows] == ["0", "1"]
    assert abs(float(rows[0]["empirical"]) - 0.25) < 0.02
    assert {r["pass"] for r in rows} <= {"pass", "fail"}


def test_byte_identical_across_runs_and_threads(b13, tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.json"))
    assert run(["simulate", "--config", str(b13), "--seed", "7", "--out", str(a)]) == 0
    assert run(["simulate", "--config", str(b13), "--seed", "7", "--threads", "8", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert run(["simulate", "--config", str(b13), "--seed", "7", "--format", "json", "--out", str(c)]) == 0
    doc = json.loads(c.read_text())
    assert doc["master_seed"] == 7 and doc["config"]["master_seed"] == 7
    assert doc["results"]["total"] == sum(doc["results"]["counts"])


def test_seed_env_fallback_and_override(b13, tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("PCSFT_SEED", "7")
    assert run(["simulate", "--config", str(b13), "--out", str(a)]) == 0
    monkeypatch.delenv("PCSFT_SEED")
    assert run(["simulate", "--config", str(b13), "--seed", "0x7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_exit_codes(b13, tmp_path, capsys):
    assert run(["born", "--config", str(tmp_path / "missing.json")]) == 1
    assert "missing.json" in capsys.readouterr().err
    assert run(["born", "--config", str(b13), "--bogus"]) == 1
    assert run(["born", "--config", str(b13), "--seed", "-4"]) == 1
    assert "--seed" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"B": [[1, 2], [2, 1]], "detector": {"threshold": 1}, "dt": 0.1, "T": 1}))
    assert run(["simulate", "--config", str(bad)]) == 1
    assert "(B)" in capsys.readouterr().err
    assert run(["simulate", "--config", str(b13), "--thresholds", "1e9", "--dt", "0.01"]) == 2
    assert "no clicks" in capsys.readouterr().err


def test_failed_run_leaves_no_file(b13, tmp_path):
    out = tmp_path / "never.csv"
    assert run(["simulate", "--config", str(b13), "--thresholds", "1e9", "--dt", "0.01", "--out", str(out)]) == 2
    assert not out.exists()
    assert list(tmp_path.iterdir()) == [b13]


def test_sweep_and_pair(tmp_path):
    cfgp = tmp_path / "anti.json"
    cfgp.write_text(json.dumps({"B": [[1, -0.9], [-0.9, 1]], "detector": {"threshold": 1.0, "mode": "windowed"},
                                "dt": 0.01, "T": 1.0, "n_trials": 2000}))
    out = tmp_path / "sweep.csv"
    assert run(["sweep", "--config", str(cfgp), "--thresholds", "0.5,1,2", "--seed", "3", "--out", str(out)]) == 0
    rows = _rows(out)
    assert [float(r["threshold"]) for r in rows] == [0.5, 1.0, 2.0]
    assert "# kendall_tau:" in out.read_text()
    pair = tmp_path / "pair.csv"
    assert run(["simulate", "--config", str(cfgp), "--pair", "0,1", "--seed", "3", "--thresholds", "1",
                "--out", str(pair)]) == 0
    assert _rows(pair)[0] == rows[1]
    assert run(["sweep", "--config", str(cfgp)]) == 1


def test_tau(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"B": [[1.0]], "detector": {"threshold": 1.0, "crossing_rule": "bridge"},
                             "dt": 1e-3, "T": 2000.0}))
    out = tmp_path / "tau.csv"
    assert run(["tau", "--config", str(p), "--out", str(out)]) == 0
    r = _rows(out)[0]
    assert float(r["expected"]) == 1.0 and abs(float(r["mean_tau"]) - 1.0) < 0.1


def test_modes(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"generator": [[1, 0], [0, 2]], "phi0": [1, 1], "times": [0, 1]}))
    assert run(["modes", "--config", str(p), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    c = doc["results"]["states"][1]["coefficients"]
    assert c[0][0] == pytest.approx(2.718281828459045) and c[1][0] == pytest.approx(7.38905609893065)
    assert run(["modes", "--config", str(p)]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("t,mode,omega")


def test_oracle(tmp_path, capsys):
    assert run(["oracle", "mean_tau", "--threshold", "2", "--power", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.5
    assert run(["oracle", "mean_tau", "--threshold", "2", "--power", "0"]) == 1
    assert run(["oracle", "survival_1d", "--t", "0", "--threshold", "1", "--power", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 1.0
    p = tmp_path / "b.json"
    p.write_text(json.dumps({"B": {"dim": 2, "entries": [1, 0, 0, 3]}}))
    assert run(["oracle", "born", "--channel", "1", "--config", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.75
