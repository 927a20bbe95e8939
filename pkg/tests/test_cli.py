import json
import subprocess
import sys

import pytest

from a1bellman.cli import main


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def summary(path):
    return json.loads((path / "summary.json").read_text())


def test_bookkeeping_outputs(tmp_path, capsys):
    assert run(tmp_path, "bookkeeping", "--p", "0.1") == 0
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines[0] == "# schema=v1"
    assert lines[1].startswith("p,Q,lhs")
    assert any("contradiction" in line for line in lines)
    doc = summary(tmp_path)
    assert doc["schema"] == "v1" and doc["command"] == "bookkeeping" and doc["pass"]
    assert set(doc["checks"][0]) == {"check", "value", "threshold", "pass"}
    assert "PASS" in capsys.readouterr().out


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["lemma83", "--m", "16", "--samples", "20000", "--seed", "3",
                     "--out", str(out)]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lemma83": {"samples": 5000, "m": [16], "seed": 9}}))
    out = tmp_path / "run"
    assert main(["lemma83", "--config", str(cfg), "--samples", "7000", "--out", str(out)]) == 0
    params = summary(out)["params"]
    assert params["samples"] == 7000 and params["seed"] == 9 and params["m"] == [16]


def test_flat_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"samples": 4000, "m": [16], "a": [0.0]}))
    out = tmp_path / "run"
    assert main(["lemma83", "--config", str(cfg), "--out", str(out)]) == 0
    assert summary(out)["params"]["samples"] == 4000


@pytest.mark.parametrize("argv", [
    ["lemma83", "--delta", "-0.1"],
    ["lemma83", "--samples", "0"],
    ["lemma83", "--seed", "-1"],
    ["bookkeeping", "--p", "1.5"],
])
def test_configuration_errors_exit_2(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lemma83": {"sample_count": 10}}))
    assert main(["lemma83", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("{not json")
    assert main(["lemma83", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_failed_invariant_exits_1(tmp_path, capsys):
    assert run(tmp_path, "lemma83", "--m", "16", "--a", "0", "--samples", "5000", "--delta", "2.0") == 1
    err = capsys.readouterr().err
    assert "failing invariant" in err and "m=16" in err
    assert summary(tmp_path)["pass"] is False


def test_hilbert_xi_small(tmp_path):
    assert run(tmp_path, "hilbert-xi", "--M", "4096", "--kernel-M", "256") == 0
    checks = summary(tmp_path)["checks"]
    assert all(c["pass"] for c in checks) and len(checks) == 5


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "a1bellman.cli", "bookkeeping", "--p", "0.5",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert (tmp_path / "summary.json").exists()
