"""Single normal observation with unknown mean: the two-sided t-test benchmark."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from ..problem import AdHocTest, ParameterPoint, TestingProblem

__all__ = ["GaussianMeanProblem", "t_test", "t_test_adhoc"]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class GaussianMeanProblem(TestingProblem):
    """``Y ~ N(beta, 1)`` with null ``beta = beta0``.

    Parameters
    ----------
    beta0 : float
        Hypothesized mean.
    """

    name = "gaussian-mean"
    dim_y = 1
    dim_theta = 1
    dim_base = 1

    def __init__(self, beta0: float = 0.0):
        self.beta0 = float(beta0)
        self.reference_point = ParameterPoint([self.beta0])

    def sample(self, base, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim <= 1:
            return base + theta.reshape(1, 1)
        return base + theta[:, :1]

    def log_ratio(self, thetas, y):
        eta, a = self.natural_params(thetas)
        return y @ eta.T - a[None, :]

    def ref_log_density(self, y):
        y = np.asarray(y)[:, 0]
        return -0.5 * (y - self.beta0) ** 2 - _HALF_LOG_2PI

    def natural_params(self, thetas):
        d = np.asarray(thetas, dtype=np.float64)[:, :1] - self.beta0
        return d, 0.5 * d[:, 0] ** 2 + self.beta0 * d[:, 0]

    def location(self, thetas):
        return np.asarray(thetas, dtype=np.float64)[:, :1]

    def in_null(self, theta):
        return theta.coords[0] == self.beta0

    def in_alt(self, theta):
        return theta.coords[0] != self.beta0

    def describe(self):
        return {"name": self.name, "beta0": self.beta0}


def t_test(y, alpha: float = 0.05, beta0: float = 0.0) -> np.ndarray:
    """Two-sided test: 1 where ``|y - beta0| > z_{1 - alpha/2}``."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[:, 0]
    z = norm.ppf(1.0 - alpha / 2.0)
    return (np.abs(y - beta0) > z).astype(np.float64)


def t_test_adhoc(alpha: float = 0.05, beta0: float = 0.0) -> AdHocTest:
    return AdHocTest(lambda y: t_test(y, alpha, beta0), name="t-test", similar=True)
