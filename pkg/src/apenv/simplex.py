"""Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np

__all__ = ["project_simplex", "check_weights", "uniform_weights"]

SUM_TOL = 1e-12


def project_simplex(v) -> np.ndarray:
    """Closest point of the unit simplex to ``v`` in Euclidean norm.

    Sort-and-threshold method: sort descending, find the largest ``k`` with
    ``u_k + (1 - sum_{i<=k} u_i) / k > 0``, shift every coordinate by the
    resulting threshold and clip at zero. Ties in the sort keep the original
    index order, so the result is reproducible.

    Parameters
    ----------
    v : array_like, shape (M,)
        Finite input vector.

    Returns
    -------
    ndarray, shape (M,)
        Nonnegative weights summing to one.

    Examples
    --------
    >>> project_simplex([1.0, 0.5])
    array([0.75, 0.25])
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("project_simplex expects a nonempty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("project_simplex input must be finite")
    if np.all(v >= 0.0) and v.sum() == 1.0:
        return v.copy()
    order = np.argsort(-v, kind="stable")
    u = v[order]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    cond = u + (1.0 - css) / k > 0.0
    rho = np.flatnonzero(cond)[-1]
    theta = (1.0 - css[rho]) / (rho + 1)
    return np.maximum(v + theta, 0.0)


def check_weights(w, m: int | None = None, name: str = "weights") -> np.ndarray:
    """Validate a simplex weight vector and return it as a float array."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if m is not None and w.size != m:
        raise ValueError(f"{name} has length {w.size}, expected {m}")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to one (got {w.sum():.12g})")
    return w


def uniform_weights(m: int) -> np.ndarray:
    """Equal weights on ``m`` support points."""
    return np.full(m, 1.0 / m)
