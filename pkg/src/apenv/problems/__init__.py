"""Built-in testing problems and a name-based registry."""

from __future__ import annotations

from .boundary import BoundaryProblem, iici_adhoc, iici_test, two_sided_y1
from .clr import clr_adhoc, clr_critical_values, clr_statistic, clr_test, lm_adhoc, lm_test
from .gaussian import GaussianMeanProblem, t_test, t_test_adhoc
from .linear_iv import FIXED_OMEGA, FIXED_SIGMA, LinearIvProblem

__all__ = [
    "GaussianMeanProblem",
    "BoundaryProblem",
    "LinearIvProblem",
    "PROBLEM_NAMES",
    "make_problem",
    "make_adhoc",
    "make_standard",
    "t_test",
    "t_test_adhoc",
    "iici_test",
    "iici_adhoc",
    "two_sided_y1",
    "clr_statistic",
    "clr_test",
    "clr_adhoc",
    "clr_critical_values",
    "lm_test",
    "lm_adhoc",
    "FIXED_OMEGA",
    "FIXED_SIGMA",
]

PROBLEM_NAMES = ("gaussian-mean", "boundary-iici", "linear-iv")

_PARAMS = {
    "gaussian-mean": {"beta0"},
    "boundary-iici": {"rho", "beta0"},
    "linear-iv": {"k", "design", "r", "beta0"},
}


def make_problem(spec: dict):
    """Instantiate a problem from ``{"name": ..., <parameters>}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in _PARAMS:
        raise ValueError(f"unknown problem {name!r}; choose one of {', '.join(PROBLEM_NAMES)}")
    extra = set(spec) - _PARAMS[name]
    if extra:
        raise ValueError(f"unknown parameter(s) for {name}: {', '.join(sorted(extra))}")
    if name == "gaussian-mean":
        return GaussianMeanProblem(**spec)
    if name == "boundary-iici":
        return BoundaryProblem(**spec)
    return LinearIvProblem(**spec)


def make_adhoc(problem, alpha: float, cv_table=None):
    """The ad hoc test each built-in problem is assessed against."""
    if isinstance(problem, GaussianMeanProblem):
        return t_test_adhoc(alpha, problem.beta0)
    if isinstance(problem, BoundaryProblem):
        return iici_adhoc(problem.rho, alpha, problem.beta0)
    if isinstance(problem, LinearIvProblem):
        if cv_table is None:
            raise ValueError("the CLR test needs a critical-value table")
        return clr_adhoc(cv_table, alpha)
    raise TypeError(f"no ad hoc test registered for {type(problem).__name__}")


def make_standard(problem, alpha: float):
    """The standard test a switching rule defers to."""
    if isinstance(problem, GaussianMeanProblem):
        return t_test_adhoc(alpha, problem.beta0)
    if isinstance(problem, BoundaryProblem):
        return two_sided_y1(alpha, problem.beta0)
    if isinstance(problem, LinearIvProblem):
        return lm_adhoc(alpha)
    raise TypeError(f"no standard test registered for {type(problem).__name__}")
