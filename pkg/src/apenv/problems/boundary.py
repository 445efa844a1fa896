"""Bivariate normal with a nuisance mean bounded below (the IICI application)."""

from __future__ import annotations

import numpy as np
from scipy.special import erf, log_ndtr
from scipy.stats import norm

from ..problem import AdHocTest, BaseDistribution, ParameterPoint, SwitchingRule, TestingProblem

__all__ = ["BoundaryProblem", "iici_test", "iici_adhoc", "iici_cutoff", "two_sided_y1", "log_ndtr_diff"]


def log_ndtr_diff(u, l):
    """``log(Phi(u) - Phi(l))`` for ``u >= l`` without cancellation in either tail."""
    u = np.asarray(u, dtype=np.float64)
    l = np.asarray(l, dtype=np.float64)
    out = np.empty(np.broadcast(u, l).shape)
    u, l = np.broadcast_arrays(u, l)
    low = u <= 0.0
    high = l >= 0.0
    mid = ~(low | high)
    if np.any(low):
        lu, ll = log_ndtr(u[low]), log_ndtr(l[low])
        out[low] = lu + np.log(-np.expm1(ll - lu))
    if np.any(high):
        lu, ll = log_ndtr(-l[high]), log_ndtr(-u[high])
        out[high] = lu + np.log(-np.expm1(ll - lu))
    if np.any(mid):
        r2 = np.sqrt(0.5)
        out[mid] = np.log(0.5 * (erf(u[mid] * r2) + erf(-l[mid] * r2)))
    return out


class BoundaryProblem(TestingProblem):
    """``Y ~ N((beta, delta), [[1, rho], [rho, 1]])`` with ``delta >= 0``.

    The null is ``beta = beta0``. Parameters are ``(beta, delta)``; the
    reference point is ``(beta0, 0)``.
    """

    name = "boundary-iici"
    dim_y = 2
    dim_theta = 2
    dim_base = 2

    def __init__(self, rho: float = 0.7, beta0: float = 0.0):
        if not -1.0 < rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        self.rho = float(rho)
        self.beta0 = float(beta0)
        self.cov = np.array([[1.0, self.rho], [self.rho, 1.0]])
        self.prec = np.linalg.inv(self.cov)
        self.chol = np.linalg.cholesky(self.cov)
        self.reference_point = ParameterPoint([self.beta0, 0.0])
        self._ref = self.reference_point.as_array()
        self._log_norm = -np.log(2.0 * np.pi) - 0.5 * np.log(1.0 - self.rho**2)

    def sample(self, base, theta):
        theta = np.asarray(theta, dtype=np.float64)
        noise = base @ self.chol.T
        if theta.ndim == 1:
            return noise + theta[None, :]
        return noise + theta

    def natural_params(self, thetas):
        thetas = np.asarray(thetas, dtype=np.float64)
        d = thetas - self._ref[None, :]
        eta = d @ self.prec
        quad = np.einsum("ij,jk,ik->i", thetas, self.prec, thetas)
        quad_ref = self._ref @ self.prec @ self._ref
        return eta, 0.5 * (quad - quad_ref)

    def location(self, thetas):
        return np.asarray(thetas, dtype=np.float64)

    def log_ratio(self, thetas, y):
        eta, a = self.natural_params(thetas)
        return y @ eta.T - a[None, :]

    def ref_log_density(self, y):
        r = np.asarray(y) - self._ref[None, :]
        return self._log_norm - 0.5 * np.einsum("ij,jk,ik->i", r, self.prec, r)

    def base_log_ratio(self, component: BaseDistribution, y):
        a_pt, b_pt = component.start.coords, component.stop.coords
        if a_pt[0] != self.beta0 or b_pt[0] != self.beta0:
            return None  # only segments along delta have the closed form
        lo, hi = sorted((a_pt[1], b_pt[1]))
        s = 1.0 / (1.0 - self.rho**2)
        t = s * (y[:, 1] - self.rho * (y[:, 0] - self.beta0))
        m = t / s
        rs = np.sqrt(s)
        return (
            0.5 * t * t / s
            + 0.5 * np.log(2.0 * np.pi / s)
            + log_ndtr_diff(rs * (hi - m), rs * (lo - m))
            - np.log(hi - lo)
        )

    def in_null(self, theta):
        beta, delta = theta.coords
        return beta == self.beta0 and delta >= 0.0

    def in_alt(self, theta):
        beta, delta = theta.coords
        return beta != self.beta0 and delta >= 0.0

    def switching_rule(self, alpha: float = 0.05, switch_point: float = 6.0, safe_level: float | None = 3.5):
        """Switch to the two-sided test on ``Y1`` once ``Y2`` exceeds the switch point."""
        return SwitchingRule(
            statistic=lambda y: np.asarray(y)[:, 1],
            switch_point=float(switch_point),
            standard_test=two_sided_y1(alpha, self.beta0),
            name="Y2 > switch point -> two-sided test on Y1",
            safe_level=safe_level,
        )

    def describe(self):
        return {"name": self.name, "rho": self.rho, "beta0": self.beta0}


def iici_cutoff(rho: float, alpha: float = 0.05) -> float:
    """Switching cutoff ``c = (1 - sqrt(1 - rho^2)) / rho * z_{1-alpha/2}``."""
    if rho == 0:
        raise ValueError("the IICI cutoff needs rho != 0")
    z = norm.ppf(1.0 - alpha / 2.0)
    return (1.0 - np.sqrt(1.0 - rho**2)) / rho * z


def iici_interval(y, rho: float, alpha: float = 0.05):
    """Lower and upper IICI bounds for each row of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    z = norm.ppf(1.0 - alpha / 2.0)
    c = iici_cutoff(rho, alpha)
    y1, y2 = y[:, 0], y[:, 1]
    w = np.sqrt(1.0 - rho**2) * z
    lower = np.where(y2 > c, y1 - z, y1 - rho * y2 - w)
    upper = np.where(y2 > -c, y1 + z, y1 - rho * y2 + w)
    return lower, upper


def iici_test(y, beta0: float = 0.0, rho: float = 0.7, alpha: float = 0.05) -> np.ndarray:
    """1 where ``beta0`` falls outside the inequality-imposed interval."""
    lower, upper = iici_interval(y, rho, alpha)
    return ((beta0 < lower) | (beta0 > upper)).astype(np.float64)


def iici_adhoc(rho: float = 0.7, alpha: float = 0.05, beta0: float = 0.0) -> AdHocTest:
    return AdHocTest(lambda y: iici_test(y, beta0, rho, alpha), name="IICI")


def two_sided_y1(alpha: float = 0.05, beta0: float = 0.0) -> AdHocTest:
    z = norm.ppf(1.0 - alpha / 2.0)
    return AdHocTest(
        lambda y: (np.abs(np.asarray(y)[:, 0] - beta0) > z).astype(np.float64),
        name="two-sided t-test on Y1",
        similar=True,
    )
