import json

import numpy as np
import pytest

from apenv.builder import (
    DOMINATED,
    INCONCLUSIVE,
    OPTIMAL,
    LoopConfig,
    ThresholdConfig,
    _pick_violators,
    build_ape,
    classify,
    heatmap_grid,
    wap_comparison,
)
from apenv.montecarlo import build_bank
from apenv.problems import GaussianMeanProblem, t_test_adhoc

PROB = GaussianMeanProblem()


def test_classify_rules():
    assert classify([0.001, -0.002], [0.05], 0.05, 0.005) == OPTIMAL
    assert classify([0.02, 0.0], [0.05], 0.05, 0.005) == DOMINATED
    assert classify([0.02, -0.01], [0.05], 0.05, 0.005) == INCONCLUSIVE
    assert classify([0.0, 0.0], [0.06], 0.05, 0.005) == INCONCLUSIVE
    # with a looser dominance band a small excess still counts as optimal
    assert classify([0.003], [0.05], 0.05, 0.005, 0.004) == OPTIMAL
    assert classify([0.003], [0.05], 0.05, 0.005, 0.001) == DOMINATED


def test_violator_selection():
    pts = list("abcde")
    assert _pick_violators(pts, [0.0, 0.001, 0.0, 0.0, 0.0], 0.005, 5) == []
    assert _pick_violators(pts, [0.006, 0.007, 0.0, 0.0, 0.0], 0.005, 5) == ["b"]
    assert _pick_violators(pts, [0.011, 0.02, 0.012, 0.0, 0.006], 0.005, 5) == ["b", "c", "a"]
    assert _pick_violators(pts, [0.011, 0.02, 0.012, 0.0, 0.006], 0.005, 2) == ["b", "c"]


def test_threshold_and_loop_validation():
    with pytest.raises(ValueError):
        ThresholdConfig(epsilon=0.0, fine_null_grid=[[0.0]], fine_alt_grid=[[1.0]])
    with pytest.raises(ValueError):
        ThresholdConfig(fine_null_grid=[], fine_alt_grid=[[1.0]])
    t = ThresholdConfig(fine_null_grid=[[0.0]], fine_alt_grid=[[1.0]])
    assert t.dominance_epsilon == t.epsilon
    with pytest.raises(ValueError):
        LoopConfig(dual_stride=0)


@pytest.fixture(scope="module")
def report():
    fit, verify = build_bank(1, 40_000, 1), build_bank(2, 40_000, 1)
    fine_alt = [[b] for b in np.linspace(-3, 3, 13) if b != 0]
    th = ThresholdConfig(epsilon=0.01, fine_null_grid=[[0.0]], fine_alt_grid=fine_alt, max_refinements=2)
    loops = LoopConfig(n_outer=40, n_inner=400, warm_inner=40)
    return build_ape(PROB, t_test_adhoc(), [[0.0]], [[-1.0], [1.0]], th, (fit, verify), 0.05, loops=loops)


def test_small_gaussian_build(report):
    assert report.verdict == OPTIMAL
    assert np.max(np.abs(report.diff)) <= 0.01
    assert report.null_envelope[0] <= 0.06
    assert len(report.history) == 1
    env, adh = wap_comparison(report)
    assert env == pytest.approx(adh, abs=0.01)


def test_report_files(report, tmp_path):
    report.write(tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"report.json", "heatmap.csv", "weights.csv", "null_diagnostics.csv", "outer_trace.csv",
            "summary.txt"} <= names
    d = json.loads((tmp_path / "report.json").read_text())
    assert d["verdict"] == OPTIMAL and d["seeds"] == {"fit": 1, "verify": 2}
    lines = (tmp_path / "heatmap.csv").read_text().splitlines()
    assert lines[0] == "theta_1,power_envelope,power_adhoc,diff_pp"
    assert len(lines) == 13
    for row in lines[1:]:
        assert len(row.rsplit(",", 1)[1].split(".")[1]) == 3
    assert (tmp_path / "summary.txt").read_text().strip().endswith(f"verdict: {OPTIMAL}")
    rows = heatmap_grid(report, "json")
    assert rows[0]["diff_pp"] == pytest.approx(report.diff_pp[0])
    with pytest.raises(ValueError):
        heatmap_grid(report, "xml")


def test_equal_seeds_rejected():
    bank = build_bank(1, 1000, 1)
    th = ThresholdConfig(fine_null_grid=[[0.0]], fine_alt_grid=[[1.0]])
    with pytest.raises(ValueError, match="different seeds"):
        build_ape(PROB, t_test_adhoc(), [[0.0]], [[1.0]], th, (bank, bank), 0.05)
