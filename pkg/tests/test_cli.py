import json
import math

import pytest

from rw2d.cli import main, read_config


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_annulus_example(capsys):
    code, out, _ = _run(capsys, "annulus", "--r", "10", "--R", "100", "--x", "30", "0")
    assert code == 0
    doc = json.loads(out)
    t = doc["reports"][0]["tables"]
    assert abs(t["p_exit_outer"] - t["log_ratio_formula"]) <= 0.02
    assert t["log_ratio_formula"] == pytest.approx(math.log(3) / math.log(10))


def test_green_and_hitting(capsys, tmp_path):
    code, out, _ = _run(capsys, "green", "--R", "10", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "green.csv").read_text().startswith("x,y,value\n")
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["passed"] and "out" not in doc["config"]
    code, out, _ = _run(capsys, "hitting", "--R", "5", "--x", "1", "1")
    assert code == 0 and json.loads(out)["passed"]


def test_qn_oracle(capsys):
    code, out, _ = _run(capsys, "qn", "--a", "0.5", "--n", "6", "--oracle")
    assert code == 0
    t = json.loads(out)["reports"][0]["tables"]
    assert t["log_q"] == pytest.approx(t["log_q_bruteforce"], rel=1e-12)


@pytest.mark.parametrize("argv", [
    ["nope"],
    ["annulus", "--r", "10", "--R", "100", "--x", "5", "0"],
    ["qn", "--a", "0.5", "--n", "12", "--oracle"],
    ["green", "--trials", "5"],
    ["verify", "--R", "10"],
    ["spectrum", "--levels", "3"],
    ["annulus", "--R", "10", "20"],
    ["green", "--config", "/nonexistent/file"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 2
    assert "usage" in err


def test_failed_check_exits_1(capsys):
    code, _, err = _run(capsys, "qn", "--a", "0.5", "--n", "30")
    assert code == 0
    code, _, err = _run(capsys, "histories", "--trials", "1000", "--levels", "3")
    assert code in (0, 1)
    # 200 trials inflate the empirical TV far past its 0.05 gate
    code, out, err = _run(capsys, "excursions", "--trials", "200", "--seed", "1")
    assert code == 1 and "FAIL excursions.lattice.conditional_tv" in err
    assert not json.loads(out)["passed"]


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# annulus run\nr = 10\nR = 100\nx = 30 0\nseed = 4\n")
    assert read_config(cfg) == {"r": 10, "R": [100], "x": [30, 0], "seed": 4}
    code, out, _ = _run(capsys, "annulus", "--config", str(cfg), "--x", "40", "0")
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["x"] == [40, 0] and doc["config"]["seed"] == 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    code, _, _ = _run(capsys, "annulus", "--config", str(bad))
    assert code == 2


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("RW2D_SEED", "17")
    code, out, _ = _run(capsys, "qn", "--n", "10")
    assert json.loads(out)["config"]["seed"] == 17
    code, out, _ = _run(capsys, "qn", "--n", "10", "--seed", "3")
    assert json.loads(out)["config"]["seed"] == 3
    monkeypatch.delenv("RW2D_SEED")
    code, out, _ = _run(capsys, "qn", "--n", "10")
    assert json.loads(out)["config"]["seed"] == 0


def test_csv_format(capsys):
    code, out, _ = _run(capsys, "annulus", "--format", "csv")
    lines = out.splitlines()
    assert code == 0
    assert lines[0] == "report,check,anchor,observed,lower,upper,status,provenance"
    assert any(l.startswith("annulus,log_ratio,") for l in lines)


def test_suite_command_outputs(capsys, tmp_path):
    code, _, _ = _run(capsys, "local-time-law", "--R", "30", "--x", "5", "0", "--trials", "10000",
                      "--seed", "2", "--threads", "2", "--out", str(tmp_path))
    assert code in (0, 1)
    assert {p.name for p in tmp_path.iterdir()} == {"report.json", "metrics.csv", "timings.json"}
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["reports"][0]["parameters"]["R"] == 30
    assert "threads" not in doc["config"]
    timings = json.loads((tmp_path / "timings.json").read_text())
    assert timings["local_time"] > 0


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "rw2d", "qn", "--n", "8"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["reports"][0]["name"] == "qn"
