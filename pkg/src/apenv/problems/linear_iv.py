"""Homoskedastic linear IV model reduced to the invariant statistic Q.

With k instruments, the sufficient statistics S and T are independent
``N(c_beta mu, I_k)`` and ``N(d_beta mu, I_k)`` vectors with
``||mu||^2 = lambda`` (the concentration parameter). Tests invariant to
rotations depend on the data only through

    Q = [[S'S, S'T], [T'S, T'T]],

which is noncentral Wishart. Observations are stored as rows
``(Q_S, Q_ST, Q_T)`` and parameters as ``(beta, lambda)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .. import _kernels
from ..problem import ParameterPoint, TestingProblem
from ..special import hyp0f1_table

__all__ = ["LinearIvProblem", "FIXED_OMEGA", "FIXED_SIGMA", "q_from_sT", "q_is_valid"]

FIXED_OMEGA = "fixed-omega"
FIXED_SIGMA = "fixed-sigma"


def q_from_sT(S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Rows ``(S'S, S'T, T'T)`` from (N, k) arrays of S and T vectors."""
    S = np.asarray(S, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    return np.column_stack([np.einsum("ij,ij->i", S, S), np.einsum("ij,ij->i", S, T), np.einsum("ij,ij->i", T, T)])


def q_is_valid(y, tol: float = 1e-9) -> np.ndarray:
    """Rows that form a positive semidefinite 2x2 matrix (up to ``tol`` relative)."""
    y = np.asarray(y, dtype=np.float64)
    qs, qst, qt = y[:, 0], y[:, 1], y[:, 2]
    return (qs >= 0) & (qt >= 0) & (qst * qst <= qs * qt * (1 + tol) + tol)


class LinearIvProblem(TestingProblem):
    """Testing ``beta = beta0`` with the concentration parameter as nuisance.

    Parameters
    ----------
    k : int
        Number of instruments.
    design : {"fixed-omega", "fixed-sigma"}
        Which error covariance is held fixed as ``beta`` varies: the
        reduced-form ``Omega = [[1, r], [r, 1]]`` or the structural
        ``Sigma = [[1, r], [r, 1]]``, in which case
        ``Omega(beta) = [[1 + 2 beta r + beta^2, r + beta], [r + beta, 1]]``.
    r : float
        The fixed off-diagonal entry (``Omega_12`` or ``Sigma_12``).
    beta0 : float
        Hypothesized value.

    Notes
    -----
    The reference density is the central Wishart at ``(beta0, 0)``. Against
    it, the density at ``(beta, lambda)`` has log ratio
    ``-lambda (c^2 + d^2) / 2 + log 0F1(k/2; lambda h / 4)`` with
    ``h = c^2 Q_S + 2 c d Q_ST + d^2 Q_T``.
    """

    name = "linear-iv"
    dim_y = 3
    dim_theta = 2

    def __init__(self, k: int = 5, design: str = FIXED_OMEGA, r: float = 0.5, beta0: float = 0.0):
        if k < 2:
            raise ValueError("need at least two instruments for a Wishart density")
        if design not in (FIXED_OMEGA, FIXED_SIGMA):
            raise ValueError(f"design must be {FIXED_OMEGA!r} or {FIXED_SIGMA!r}")
        if not -1 < r < 1:
            raise ValueError("the fixed correlation must lie in (-1, 1)")
        self.k = int(k)
        self.design = design
        self.r = float(r)
        self.beta0 = float(beta0)
        self.dim_base = 2 * self.k
        self.reference_point = ParameterPoint([self.beta0, 0.0])
        self._table = hyp0f1_table(self.k / 2.0)
        self._stats_keep = None

    # -- model ----------------------------------------------------------------

    def omega(self, beta: float) -> np.ndarray:
        """Reduced-form error covariance in force at ``beta``."""
        r = self.r
        if self.design == FIXED_OMEGA:
            return np.array([[1.0, r], [r, 1.0]])
        return np.array([[1.0 + 2.0 * beta * r + beta * beta, r + beta], [r + beta, 1.0]])

    def mean_coefficients(self, beta):
        """``(c_beta, d_beta)`` so that ``E S = c mu`` and ``E T = d mu``.

        ``c = (beta - beta0) / sqrt(b0' Omega b0)`` and
        ``d = a' Omega^-1 a0 / sqrt(a0' Omega^-1 a0)`` with ``b0 = (1, -beta0)``,
        ``a = (beta, 1)``, ``a0 = (beta0, 1)``.
        """
        beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
        c = np.empty_like(beta)
        d = np.empty_like(beta)
        b0 = np.array([1.0, -self.beta0])
        a0 = np.array([self.beta0, 1.0])
        for i, bt in enumerate(beta):
            om = self.omega(bt)
            oi = np.linalg.inv(om)
            c[i] = (bt - self.beta0) / math.sqrt(b0 @ om @ b0)
            d[i] = (np.array([bt, 1.0]) @ oi @ a0) / math.sqrt(a0 @ oi @ a0)
        return c, d

    def _base_stats(self, base: np.ndarray):
        key = id(base)
        hit = self._stats_keep
        if hit is not None and hit[0] == key and hit[1] is base:
            return hit[2]
        k = self.k
        s, t = base[:, :k], base[:, k:]
        stats = (
            np.einsum("ij,ij->i", s, s),
            np.einsum("ij,ij->i", s, t),
            np.einsum("ij,ij->i", t, t),
            s[:, 0].copy(),
            t[:, 0].copy(),
        )
        self._stats_keep = (key, base, stats)
        return stats

    def sample(self, base, theta):
        """Q rows with ``S = s + c sqrt(lambda) e_1`` and ``T = t + d sqrt(lambda) e_1``.

        ``base`` holds the k columns of s followed by the k columns of t.
        ``theta`` is one ``(beta, lambda)`` or one per draw.
        """
        theta = np.asarray(theta, dtype=np.float64)
        ss, st, tt, s1, t1 = self._base_stats(base)
        if theta.ndim <= 1:
            beta, lam = float(theta[0]), float(theta[1])
            if lam < 0:
                raise ValueError("lambda must be nonnegative")
            c, d = (float(v[0]) for v in self.mean_coefficients(beta))
            m = math.sqrt(lam)
        else:
            if np.any(theta[:, 1] < 0):
                raise ValueError("lambda must be nonnegative")
            c, d = self.mean_coefficients(theta[:, 0])
            m = np.sqrt(theta[:, 1])
        cm, dm = c * m, d * m
        qs = ss + 2.0 * cm * s1 + cm * cm
        qst = st + cm * t1 + dm * s1 + cm * dm
        qt = tt + 2.0 * dm * t1 + dm * dm
        return np.column_stack([qs, qst, qt])

    def log_ratio(self, thetas, y):
        thetas = self._as_thetas(thetas)
        y = self._as_obs(y)
        if np.any(thetas[:, 1] < 0):
            raise ValueError("lambda must be nonnegative")
        c, d = self.mean_coefficients(thetas[:, 0])
        return _kernels.iv_log_ratios(y[:, 0], y[:, 1], y[:, 2], c, d, thetas[:, 1], self._table)

    def ref_log_density(self, y):
        """Central Wishart(k, I_2) log density of Q on (Q_S, Q_ST, Q_T)."""
        y = self._as_obs(y)
        k = self.k
        det = np.maximum(y[:, 0] * y[:, 2] - y[:, 1] ** 2, 0.0)
        log_gamma2 = 0.5 * math.log(math.pi) + special.gammaln(k / 2.0) + special.gammaln((k - 1) / 2.0)
        with np.errstate(divide="ignore"):
            return 0.5 * (k - 3) * np.log(det) - 0.5 * (y[:, 0] + y[:, 2]) - k * math.log(2.0) - log_gamma2

    def in_null(self, theta):
        beta, lam = theta.coords
        return beta == self.beta0 and lam >= 0

    def in_alt(self, theta):
        beta, lam = theta.coords
        return beta != self.beta0 and lam >= 0

    def describe(self):
        return {"name": self.name, "k": self.k, "design": self.design, "r": self.r, "beta0": self.beta0}

    def switching_rule(self, alpha: float = 0.05, switch_point: float = 160.0, safe_level: float | None = 75.0):
        """Defer to the LM test once ``Q_T`` exceeds ``switch_point``."""
        from ..problem import SwitchingRule
        from .clr import lm_adhoc

        return SwitchingRule(
            statistic=lambda y: np.asarray(y)[:, 2],
            switch_point=float(switch_point),
            standard_test=lm_adhoc(alpha),
            name="Q_T",
            safe_level=safe_level,
        )
