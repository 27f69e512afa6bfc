import json
import math
import time

import pytest

from ballstab.cli import main
from ballstab.shapes import ball, normalize, shape_from_modes, unit_volume_radius, write_shape


@pytest.fixture(autouse=True)
def runs_root(tmp_path, monkeypatch):
    monkeypatch.setenv("BALLSTAB_RUNS", str(tmp_path / "runs"))
    return tmp_path / "runs"


def test_threshold_is_fast_and_correct(capsys, runs_root):
    t0 = time.perf_counter()
    assert main(["threshold", "--dim", "2"]) == 0
    assert time.perf_counter() - t0 < 1.0
    out = capsys.readouterr().out
    assert "c* = 0.0773" in out
    run = next(runs_root.iterdir())
    assert {"config.json", "modes.csv", "summary.txt", "plot_modes.py"} <= {p.name for p in run.iterdir()}


def test_eval_unit_area_disk(tmp_path, capsys):
    path = tmp_path / "ball.shape"
    write_shape(path, ball(2, 8, radius=unit_volume_radius(2)))
    assert main(["eval", "--shape", str(path), "--functionals", "P,lambda1", "--mesh-size", "0.02"]) == 0
    out = capsys.readouterr().out
    vals = dict(line.split(" = ") for line in out.splitlines() if " = " in line)
    assert float(vals["P"]) == pytest.approx(2 * math.sqrt(math.pi), abs=1e-4)
    assert float(vals["lambda1"]) == pytest.approx(math.pi * 2.404825557695773**2, rel=5e-3)


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["optimize", "--c", "0.05"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["threshold", "--config", str(bad)]) == 1
    assert main(["eval", "--shape", str(tmp_path / "missing.shape")]) == 1


def test_failed_verdict_exits_two(tmp_path, capsys):
    path = tmp_path / "y2.shape"
    write_shape(path, normalize(shape_from_modes(2, 8, {(2, 2): 0.2})))
    assert main(["qmpcc", "--shape", str(path), "--lambda", "0", "--seed", "1", "--n-competitors", "20"]) == 2


def test_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 3, "l_max": 4}))
    run = tmp_path / "out"
    assert main(["threshold", "--config", str(cfg), "--dim", "2", "--run-dir", str(run)]) == 0
    snapshot = json.loads((run / "config.json").read_text())
    assert snapshot["dim"] == 2 and snapshot["l_max"] == 4


def test_fuglede_subcommand(tmp_path, capsys):
    run = tmp_path / "fug"
    assert main(["fuglede", "--functional", "J_c", "--c", "0.038", "--mode", "2", "--mesh-size", "0.05", "--run-dir", str(run)]) == 0
    lines = (run / "ladder.csv").read_text().splitlines()
    assert lines[0] == "eps,value,model,remainder,increment" and len(lines) == 6
