import numpy as np
import pytest
from scipy.stats import norm

from apenv.montecarlo import build_bank, rejection_rates
from apenv.problems import (
    BoundaryProblem,
    GaussianMeanProblem,
    LinearIvProblem,
    iici_adhoc,
    make_adhoc,
    make_problem,
    make_standard,
    two_sided_y1,
)
from apenv.problems.boundary import iici_cutoff, iici_interval, log_ndtr_diff
from apenv.problems.configs import CONFIG_NAMES, expand_components, expand_grid, paper_configs, thin


def test_log_ndtr_diff_in_both_tails():
    u = np.array([-30.0, 1.0, 40.0, 0.5])
    l = np.array([-31.0, -1.0, 39.0, 0.4])
    direct = np.log(norm.cdf(u[1:2]) - norm.cdf(l[1:2]))
    out = log_ndtr_diff(u, l)
    assert np.all(np.isfinite(out))
    assert out[1] == pytest.approx(direct[0])
    assert out[3] == pytest.approx(np.log(norm.cdf(0.5) - norm.cdf(0.4)))


def test_iici_interval_shape():
    lower, upper = iici_interval(np.array([[0.0, 10.0], [0.0, -10.0]]), rho=0.7)
    z = norm.ppf(0.975)
    assert (lower[0], upper[0]) == pytest.approx((-z, z))
    assert upper[1] - lower[1] == pytest.approx(2 * np.sqrt(1 - 0.49) * z)
    assert iici_cutoff(0.7) == pytest.approx((1 - np.sqrt(0.51)) / 0.7 * z)


def test_iici_controls_size_on_the_boundary_null():
    prob = BoundaryProblem(rho=0.7)
    bank = build_bank(4, 200_000, 2)
    sizes = rejection_rates(iici_adhoc(0.7), [[0.0, d] for d in (0.0, 0.5, 1.0, 2.0, 5.0)], bank, prob)
    assert np.all(sizes <= 0.05 + 3 * np.sqrt(0.05 * 0.95 / bank.n_draws))
    # far from the boundary it is the two-sided test on Y1
    assert sizes[-1] == pytest.approx(0.05, abs=0.003)


def test_two_sided_standard_test():
    t = two_sided_y1(0.05)
    np.testing.assert_array_equal(t(np.array([[2.0, 0.0], [1.0, 5.0]])), [1.0, 0.0])


def test_registry():
    assert isinstance(make_problem({"name": "gaussian-mean"}), GaussianMeanProblem)
    iv = make_problem({"name": "linear-iv", "k": 10, "design": "fixed-sigma"})
    assert isinstance(iv, LinearIvProblem) and iv.k == 10
    with pytest.raises(ValueError, match="unknown problem"):
        make_problem({"name": "nope"})
    with pytest.raises(ValueError, match="unknown parameter"):
        make_problem({"name": "boundary-iici", "k": 3})
    bp = BoundaryProblem()
    assert make_adhoc(bp, 0.05).name == "IICI"
    assert make_standard(bp, 0.05).similar
    with pytest.raises(ValueError):
        make_adhoc(iv, 0.05)


def test_grid_expansion():
    assert expand_grid({"product": [[1, 2], [0, 5]]}) == [[1, 0], [1, 5], [2, 0], [2, 5]]
    pts = expand_grid({"b_over_sqrt_lambda": [{"b": [2, -2], "lambda": [4]}]})
    assert pts == [[1.0, 4.0], [-1.0, 4.0]]
    assert expand_grid([1.0, [2.0]]) == [[1.0], [2.0]]
    comps = expand_components([{"kind": "base", "start": [0, 0], "stop": [0, 1]}, [0, 2]])
    assert comps[0]["kind"] == "base" and comps[1] == [0.0, 2.0]
    with pytest.raises(ValueError):
        expand_grid({"weird": []})


def test_thinning_keeps_every_other_nuisance_value():
    pts = expand_grid({"product": [[0.0], [1, 5, 10, 15, 20]]})
    assert [p[1] for p in thin(pts, 2)] == [1.0, 10.0, 20.0]


@pytest.mark.parametrize("name", CONFIG_NAMES)
def test_published_configs_are_valid(name):
    from apenv.config import validate_config

    validate_config(paper_configs(name))


def test_published_support_sizes():
    assert len(paper_configs("boundary-iici")["null_support"]) == 28
    assert len(expand_grid(paper_configs("boundary-iici")["alt_support"])) == 102
    om = paper_configs("iv-fixed-omega")
    assert len(expand_grid(om["null_support"])) == 21
    assert len(expand_grid(om["alt_support"])) == 126
    sig = paper_configs("iv-fixed-sigma")
    assert len(expand_grid(sig["null_support"])) == 19
    with pytest.raises(ValueError):
        paper_configs("unknown")
