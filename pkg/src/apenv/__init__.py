"""Approximate power envelopes for checking ad hoc hypothesis tests.

A test is compared with a weighted-average-power maximizing test whose
least favorable null mixture and most favorable alternative weights are
found by projected subgradient loops on a shared Monte Carlo bank.
Hot kernels are compiled with numba; set ``APENV_DISABLE_NUMBA=1`` to
run the pure numpy versions instead.
"""

from .builder import DOMINATED, INCONCLUSIVE, OPTIMAL, ApeReport, LoopConfig, ThresholdConfig, build_ape, classify
from .inner import DualTrace, NpTest, run_inner, to_neyman_pearson
from .montecarlo import DrawBank, build_bank, load_bank, rejection_rates, save_bank, tune_seed, wap
from .outer import OuterTrace, run_outer
from .problem import (
    AdHocTest,
    AlternativeSupport,
    BaseDistribution,
    ParameterPoint,
    PointMass,
    SwitchingRule,
    TestingProblem,
    validate_problem,
)
from .simplex import project_simplex

__version__ = "0.1.0"

__all__ = [
    "AdHocTest",
    "AlternativeSupport",
    "ApeReport",
    "BaseDistribution",
    "DOMINATED",
    "DrawBank",
    "DualTrace",
    "INCONCLUSIVE",
    "LoopConfig",
    "NpTest",
    "OPTIMAL",
    "OuterTrace",
    "ParameterPoint",
    "PointMass",
    "SwitchingRule",
    "TestingProblem",
    "ThresholdConfig",
    "build_ape",
    "build_bank",
    "classify",
    "load_bank",
    "project_simplex",
    "rejection_rates",
    "run_inner",
    "run_outer",
    "save_bank",
    "to_neyman_pearson",
    "tune_seed",
    "validate_problem",
    "wap",
]
