"""Conditional likelihood ratio and LM tests for the linear IV problem.

Observations are rows ``(Q_S, Q_ST, Q_T)``. The CLR test rejects when

    LR = (Q_S - Q_T + sqrt((Q_S - Q_T)^2 + 4 Q_ST^2)) / 2

exceeds the ``1 - alpha`` quantile of its null law given ``Q_T``. That
quantile is simulated on a grid of ``Q_T`` values and interpolated.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import chi2

from ..problem import AdHocTest

__all__ = [
    "clr_statistic",
    "lm_statistic",
    "lm_test",
    "lm_adhoc",
    "CvTable",
    "default_qt_grid",
    "clr_critical_values",
    "clr_test",
    "clr_adhoc",
]

log = logging.getLogger(__name__)

CV_MAGIC = b"APECVTB\0"
CV_VERSION = 1
_CV_HEADER = struct.Struct("<8sIIQQdI")  # magic, version, k, n_draws, seed, alpha, n_nodes
_CV_SALT = 0xC1A


def _cols(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    return y[:, 0], y[:, 1], y[:, 2]


def clr_statistic(y) -> np.ndarray:
    """``(Q_S - Q_T + sqrt((Q_S - Q_T)^2 + 4 Q_ST^2)) / 2`` per row."""
    qs, qst, qt = _cols(y)
    dq = qs - qt
    return 0.5 * (dq + np.sqrt(dq * dq + 4.0 * qst * qst))


def lm_statistic(y) -> np.ndarray:
    """``Q_ST^2 / Q_T`` per row; ``Q_T`` must be positive."""
    _, qst, qt = _cols(y)
    if np.any(qt <= 0):
        raise ValueError("the LM statistic needs Q_T > 0")
    return qst * qst / qt


def lm_test(y, alpha: float = 0.05) -> np.ndarray:
    """1 where ``Q_ST^2 / Q_T`` exceeds the chi-square(1) ``1 - alpha`` quantile."""
    return (lm_statistic(y) > chi2.ppf(1.0 - alpha, 1)).astype(np.float64)


def lm_adhoc(alpha: float = 0.05) -> AdHocTest:
    return AdHocTest(lambda y: lm_test(y, alpha), name="LM test")


def default_qt_grid(n_nodes: int = 400, lo: float = 1e-3, hi: float = 600.0) -> np.ndarray:
    """Log-spaced conditioning values for the critical-value table."""
    return np.geomspace(lo, hi, n_nodes)


@dataclass(frozen=True)
class CvTable:
    """Conditional critical values ``cv(q_T)`` on a grid, with monotone interpolation.

    Interpolation is piecewise cubic and shape preserving in ``log q_T``.
    Values of ``q_T`` outside the grid are clamped to its ends.
    """

    k: int
    alpha: float
    n_draws: int
    seed: int
    grid: np.ndarray
    cv: np.ndarray

    def __post_init__(self):
        if self.grid.shape != self.cv.shape or self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("grid and critical values must be matching 1-d arrays")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("conditioning grid must be strictly increasing")
        object.__setattr__(self, "_interp", PchipInterpolator(np.log(self.grid), self.cv, extrapolate=False))

    def __call__(self, qt) -> np.ndarray:
        qt = np.asarray(qt, dtype=np.float64)
        lo, hi = self.grid[0], self.grid[-1]
        outside = (qt < lo) | (qt > hi)
        n_out = int(np.count_nonzero(outside))
        if n_out:
            log.warning("CLR table: %d Q_T values outside [%g, %g] clamped to the grid ends", n_out, lo, hi)
        return self._interp(np.log(np.clip(qt, lo, hi)))

    @property
    def key(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.grid, dtype="<f8").tobytes()).hexdigest()[:12]
        return f"k{self.k}_a{self.alpha:g}_n{self.n_draws}_s{self.seed}_{h}"

    def save(self, path) -> None:
        head = _CV_HEADER.pack(CV_MAGIC, CV_VERSION, self.k, self.n_draws, self.seed, self.alpha, self.grid.size)
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(self.grid, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.cv, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "CvTable":
        raw = Path(path).read_bytes()
        if len(raw) < _CV_HEADER.size:
            raise ValueError(f"{path}: too short for a critical-value table")
        magic, version, k, n_draws, seed, alpha, n = _CV_HEADER.unpack_from(raw)
        if magic != CV_MAGIC:
            raise ValueError(f"{path}: not a critical-value table")
        if version != CV_VERSION:
            raise ValueError(f"{path}: unsupported table version {version}")
        body = np.frombuffer(raw, dtype="<f8", offset=_CV_HEADER.size)
        if body.size != 2 * n:
            raise ValueError(f"{path}: body size does not match header")
        return cls(k=k, alpha=alpha, n_draws=n_draws, seed=seed, grid=body[:n].copy(), cv=body[n:].copy())


def _cache_dir() -> Path:
    return Path(os.environ.get("APENV_CACHE_DIR", Path.home() / ".cache" / "apenv"))


def clr_critical_values(
    k: int,
    alpha: float = 0.05,
    n_draws: int = 1_000_000,
    qt_grid=None,
    seed: int = 0,
    cache: bool = True,
) -> CvTable:
    """Simulate the null ``1 - alpha`` quantile of LR given ``Q_T = q`` at each grid node.

    Under the null ``S ~ N(0, I_k)`` independently of ``T``; rotating ``T`` to
    ``(sqrt(q), 0, ..., 0)`` gives ``Q_S = S_1^2 + W`` with ``W ~ chi2(k - 1)``
    and ``Q_ST = sqrt(q) S_1``. The same ``n_draws`` draws of ``(S_1, W)`` are
    used at every node, so the table is smooth in ``q``.

    Tables are cached on disk under ``$APENV_CACHE_DIR`` (default
    ``~/.cache/apenv``), keyed by ``k``, ``alpha``, ``n_draws``, ``seed`` and a
    hash of the grid.
    """
    grid = default_qt_grid() if qt_grid is None else np.asarray(qt_grid, dtype=np.float64)
    probe = CvTable(k=k, alpha=alpha, n_draws=n_draws, seed=seed, grid=grid, cv=np.zeros_like(grid))
    path = _cache_dir() / f"clr_cv_{probe.key}.bin"
    if cache and path.exists():
        try:
            return CvTable.load(path)
        except ValueError as err:
            log.warning("ignoring unreadable cache file %s: %s", path, err)

    rng = np.random.default_rng([seed, _CV_SALT])
    s1 = rng.standard_normal(n_draws)
    w = rng.chisquare(k - 1, n_draws) if k > 1 else np.zeros(n_draws)
    qs = s1 * s1 + w
    s1sq = s1 * s1
    cv = np.empty_like(grid)
    for j, q in enumerate(grid):
        dq = qs - q
        lr = 0.5 * (dq + np.sqrt(dq * dq + 4.0 * q * s1sq))
        cv[j] = np.quantile(lr, 1.0 - alpha)
    table = CvTable(k=k, alpha=alpha, n_draws=n_draws, seed=seed, grid=grid, cv=cv)
    if cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            table.save(tmp)
            tmp.replace(path)
        except OSError as err:
            log.warning("could not write critical-value cache %s: %s", path, err)
    return table


def clr_test(y, alpha: float, cv_table: CvTable) -> np.ndarray:
    """1 where LR exceeds the interpolated conditional critical value at the row's ``Q_T``."""
    if abs(cv_table.alpha - alpha) > 1e-12:
        raise ValueError(f"critical values were built for alpha={cv_table.alpha}, not {alpha}")
    _, _, qt = _cols(y)
    return (clr_statistic(y) > cv_table(qt)).astype(np.float64)


def clr_adhoc(cv_table: CvTable, alpha: float | None = None) -> AdHocTest:
    a = cv_table.alpha if alpha is None else alpha
    return AdHocTest(lambda y: clr_test(y, a, cv_table), name="CLR test", similar=True)
