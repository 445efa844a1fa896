import json
import os
import subprocess
import sys

import pytest

from apenv import builder
from apenv.cli import main

CFG = {
    "problem": {"name": "gaussian-mean"},
    "null_support": [[0.0]],
    "alt_support": [[-1.0], [1.0]],
    "init_weights": [0.9, 0.1],
    "fine_null_grid": [[0.0]],
    "fine_alt_grid": {"product": [[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]]},
    "draws": {"fit": 20000, "verify": 20000},
    "thresholds": {"epsilon": 0.01, "max_refinements": 1},
    "loops": {"n_outer": 60, "n_inner": 300, "warm_inner": 30},
    "inner": {"n_iter": 800},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG, indent=2))
    return p


def test_analyze_optimal_and_deterministic(cfg_path, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["analyze", "--config", str(cfg_path), "--out", str(a)]) == 0
    assert "verdict: EffectivelyOptimal" in capsys.readouterr().out
    assert main(["analyze", "--config", str(cfg_path), "--out", str(b)]) == 0
    for name in ("report.json", "heatmap.csv", "weights.csv", "outer_trace.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    run = json.loads((a / "run_config.json").read_text())
    assert run["config"]["draws"]["fit"] == 20000


def test_analyze_inconclusive_exit_code(tmp_path):
    cfg = {**CFG, "loops": {"n_outer": 1, "n_inner": 300}, "thresholds": {"epsilon": 0.01, "max_refinements": 0}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["analyze", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_analyze_dominated_exit_code(cfg_path, tmp_path, monkeypatch):
    monkeypatch.setattr(builder, "classify", lambda *a, **k: builder.DOMINATED)
    assert main(["analyze", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2


def test_inner_and_power_commands(cfg_path, tmp_path):
    out = tmp_path / "inner"
    assert main(["inner", "--config", str(cfg_path), "--out", str(out)]) == 0
    desc = json.loads((out / "inner_test.json").read_text())
    assert abs(desc["null_size_verify"][0] - 0.05) < 0.01
    assert (out / "dual_trace.csv").read_text().startswith("iteration,")
    rep = tmp_path / "rep"
    assert main(["analyze", "--config", str(cfg_path), "--out", str(rep)]) == 0
    for which in ("adhoc", "standard", "envelope"):
        pw = tmp_path / which
        args = ["power", "--config", str(cfg_path), "--out", str(pw), "--test", which]
        if which == "envelope":
            args += ["--report", str(rep / "report.json")]
        assert main(args) == 0
        lines = (pw / "power.csv").read_text().splitlines()
        assert lines[0] == "theta_1,power" and len(lines) == 7
    assert main(["power", "--config", str(cfg_path), "--out", str(tmp_path / "x"), "--test", "envelope"]) == 1


def test_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CFG, "seeds": {"fit": 3, "verify": 3}}, indent=2))
    assert main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "config error" in capsys.readouterr().err
    assert main(["analyze", "--out", str(tmp_path / "o")]) == 1
    assert main(["inner", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    assert main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o"), "--threads", "0"]) == 1


def test_numpy_fallback_gives_same_inner_output(cfg_path, tmp_path):
    env = dict(os.environ, APENV_DISABLE_NUMBA="1")
    code = "import apenv._kernels as k; print(k.BACKEND)"
    backend = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert backend.stdout.strip() == "numpy"
    outs = {}
    for flag in ("1", "0"):
        out = tmp_path / f"inner{flag}"
        env = dict(os.environ, APENV_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-m", "apenv.cli", "inner", "--config", str(cfg_path), "--out", str(out)],
                       env=env, check=True, capture_output=True)
        outs[flag] = json.loads((out / "inner_test.json").read_text())
    assert outs["1"]["multipliers"] == pytest.approx(outs["0"]["multipliers"], abs=1e-9)
    assert outs["1"]["null_size_verify"] == pytest.approx(outs["0"]["null_size_verify"], abs=1e-9)
