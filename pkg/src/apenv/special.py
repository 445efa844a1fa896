"""Log-scale evaluation of the confluent limit function 0F1 for Bessel-type densities."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import _kernels

__all__ = ["Hyp0f1Table", "hyp0f1_table", "log_hyp0f1", "log_hyp0f1_exact"]


def _tail_coefficients(nu: float, n_terms: int) -> np.ndarray:
    # Large-argument series of I_nu(s) e^{-s} sqrt(2 pi s): sum_q coef_q / s^q.
    mu = 4.0 * nu * nu
    coef = np.empty(n_terms)
    a = 1.0
    for q in range(1, n_terms + 1):
        a *= -(mu - (2 * q - 1) ** 2) / (q * 8.0)
        coef[q - 1] = a
    return coef


def log_hyp0f1_exact(b: float, s) -> np.ndarray:
    """``log 0F1(b; s^2/4)`` straight from scipy, for reference and table building.

    Uses ``0F1(b; s^2/4) = Gamma(b) (s/2)^(1-b) I_(b-1)(s)`` with the
    exponentially scaled Bessel function, and the power series for ``s < 1``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    out = np.empty_like(s)
    small = s < 1.0
    out[small] = np.log(special.hyp0f1(b, 0.25 * s[small] ** 2))
    big = s[~small]
    out[~small] = (
        special.gammaln(b)
        + (1.0 - b) * np.log(0.5 * big)
        + np.log(special.ive(b - 1.0, big))
        + big
    )
    return out


@dataclass(frozen=True)
class Hyp0f1Table:
    """Cubic Hermite table of ``T(s) = log 0F1(b; s^2/4) - s`` on ``[0, s_max]``.

    Past ``s_max`` the large-argument Bessel expansion is used on the log
    scale, so evaluation never overflows.

    Attributes
    ----------
    b : float
        Lower parameter (``k/2`` for k instruments).
    step : float
        Node spacing.
    values, derivs : ndarray
        ``T`` and ``T'`` at the nodes.
    tail_coef : ndarray
        Coefficients of the asymptotic series in ``1/s``.
    lgamma_b : float
        ``log Gamma(b)``.
    """

    b: float
    step: float
    values: np.ndarray
    derivs: np.ndarray
    tail_coef: np.ndarray
    lgamma_b: float

    @property
    def s_max(self) -> float:
        return self.step * (self.values.shape[0] - 1)

    @classmethod
    def build(cls, b: float, s_max: float = 2000.0, step: float = 0.01, n_tail: int = 12):
        if b <= 0:
            raise ValueError(f"0F1 lower parameter must be positive, got {b}")
        n_nodes = int(round(s_max / step)) + 1
        s = np.arange(n_nodes) * step
        vals = log_hyp0f1_exact(b, s) - s
        nu = b - 1.0
        ders = np.empty(n_nodes)
        ders[0] = -1.0
        pos = s[1:]
        ders[1:] = special.ive(nu + 1.0, pos) / special.ive(nu, pos) - 1.0
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(ders))):
            raise FloatingPointError("non-finite entries while tabulating log 0F1")
        return cls(
            b=float(b),
            step=float(step),
            values=vals,
            derivs=ders,
            tail_coef=_tail_coefficients(nu, n_tail),
            lgamma_b=float(special.gammaln(b)),
        )

    def __call__(self, s) -> np.ndarray:
        """``log 0F1(b; s^2/4)`` for ``s >= 0``."""
        s = np.asarray(s, dtype=np.float64)
        return _kernels.hermite_eval(s, self) + s


@lru_cache(maxsize=8)
def hyp0f1_table(b: float) -> Hyp0f1Table:
    """Shared table per lower parameter ``b``."""
    return Hyp0f1Table.build(b)


def log_hyp0f1(b: float, z) -> np.ndarray:
    """``log 0F1(b; z)`` for ``z >= 0`` via the cached table."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("log_hyp0f1 is only implemented for z >= 0")
    return hyp0f1_table(float(b))(2.0 * np.sqrt(z))
