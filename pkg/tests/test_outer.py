import numpy as np
import pytest

from apenv.montecarlo import build_bank
from apenv.inner import run_inner
from apenv.outer import outer_gap_bound, power_gap_vector, run_outer
from apenv.problems import GaussianMeanProblem, t_test_adhoc
from apenv.schedules import ConstantSchedule

PROB = GaussianMeanProblem()
NULL = [[0.0]]
ALT = [[-1.0], [1.0]]


@pytest.fixture(scope="module")
def bank():
    return build_bank(1, 20_000, 1)


@pytest.fixture(scope="module")
def short_run(bank):
    return run_outer(t_test_adhoc(), [0.9, 0.1], NULL, ALT, bank, PROB, 0.05, n_iter=60, inner_iter=400, warm_inner=40)


def test_weights_move_toward_balance(short_run):
    _, w, trace = short_run
    assert trace.weights[0][1] == pytest.approx(0.1)
    assert w[1] > 0.3
    assert abs(w.sum() - 1) < 1e-12


def test_best_score_never_increases(short_run):
    _, _, trace = short_run
    assert np.all(np.diff(trace.best) <= 0)
    assert len(trace.objective) == 60 and len(trace.steps) == 59


def test_last_iterate_is_returned_by_default(short_run):
    test, w, trace = short_run
    assert trace.best_index == 59
    np.testing.assert_array_equal(w, trace.weights[-1])
    np.testing.assert_array_equal(test.weights, w)


def test_gap_selection_returns_the_minimum(bank):
    _, w, trace = run_outer(t_test_adhoc(), [0.9, 0.1], NULL, ALT, bank, PROB, 0.05, n_iter=10,
                            inner_iter=300, warm_inner=30, select="gap")
    k = int(np.argmin(trace.score))
    assert trace.best_index == k
    np.testing.assert_array_equal(w, trace.weights[k])


def test_zero_gap_leaves_weights_unchanged(bank):
    # use as ad hoc test exactly the test the first inner step will return
    lam0 = [1.8]
    target, _ = run_inner([0.5, 0.5], NULL, ALT, bank, PROB, 0.05, n_iter=1, init=lam0, selection="last")
    _, w, trace = run_outer(lambda y: target.decide(y, PROB), [0.5, 0.5], NULL, ALT, bank, PROB, 0.05,
                            n_iter=3, inner_iter=1, warm_inner=1, init_multipliers=lam0,
                            inner_kwargs={"selection": "last"})
    np.testing.assert_array_equal(trace.gamma[0], 0.0)
    assert trace.steps[0] == 0.0
    np.testing.assert_array_equal(trace.weights[1], [0.5, 0.5])


def test_gap_vector_matches_trace(bank, short_run):
    test, _, trace = short_run
    g = power_gap_vector(test, t_test_adhoc(), ALT, bank, PROB)
    np.testing.assert_allclose(g, trace.gamma[-1], atol=1e-12)


def test_trace_csv_columns(short_run, tmp_path):
    _, _, trace = short_run
    trace.to_csv(tmp_path / "o.csv")
    head = (tmp_path / "o.csv").read_text().splitlines()[0].split(",")
    assert head == ["iteration", "w_1", "w_2", "gamma_1", "gamma_2", "objective", "score", "best_score",
                    "step", "max_null_size"]


def test_argument_checks(bank):
    with pytest.raises(ValueError):
        run_outer(t_test_adhoc(), [0.5, 0.5], NULL, ALT, bank, PROB, 0.05, n_iter=0)
    with pytest.raises(ValueError):
        run_outer(t_test_adhoc(), [0.5, 0.5], NULL, ALT, bank, PROB, 0.05, select="best")
    with pytest.raises(ValueError):
        run_outer(t_test_adhoc(), [0.6, 0.6], NULL, ALT, bank, PROB, 0.05)


def test_constant_schedule_and_sign_direction(bank):
    _, _, trace = run_outer(t_test_adhoc(), [0.9, 0.1], NULL, ALT, bank, PROB, 0.05, ConstantSchedule(0.05),
                            n_iter=3, inner_iter=200, warm_inner=20, normalize="sign")
    assert trace.weights[1][1] == pytest.approx(0.15)


def test_outer_gap_bound_formula():
    b = outer_gap_bound([0.1, 0.1], 2.0, 4)
    np.testing.assert_allclose(b, [2 * 2.01 / 0.2, 2 * 2.02 / 0.4])
