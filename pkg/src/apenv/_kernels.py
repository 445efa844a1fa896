"""Hot loops behind the inner and outer solvers.

Every kernel except the factored mixture (one BLAS product on both
paths) has two implementations with identical arithmetic order: a numba
version (compiled on first use, cached on disk) and a plain numpy
version. The numpy path is used when numba is missing or when the
environment variable ``APENV_DISABLE_NUMBA`` is set to ``1``/``true``.

Decision kernels sum multiplier-weighted density ratios in ascending
component order in float64 on both backends, so rejection counts agree
bit-for-bit between them.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "set_threads",
    "reject_counts",
    "reject_stats",
    "mix_dense",
    "mix_factored",
    "hermite_eval",
    "iv_log_ratios",
]

_FLAG = os.environ.get("APENV_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by APENV_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # The TBB layer shipped with some distributions is too old; the
    # workqueue layer is always present and keeps scheduling deterministic.
    if os.environ.get("NUMBA_THREADING_LAYER") is None:
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

BACKEND = "numba" if numba is not None else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _reject_counts_np(null_ratio, lam, alt_mix, forced, rows):
    active = np.flatnonzero(lam > 0.0)
    out = np.empty(rows.shape[0], dtype=np.int64)
    for r, e in enumerate(rows):
        acc = np.zeros(alt_mix.shape[1])
        for i in active:
            acc += lam[i] * null_ratio[i, e].astype(np.float64)
        dec = alt_mix[e] >= acc
        f = forced[e]
        dec = np.where(f >= 0, f == 1, dec)
        out[r] = np.count_nonzero(dec)
    return out


def _reject_stats_np(null_ratio, lam, alt_mix, forced, rows):
    active = np.flatnonzero(lam > 0.0)
    counts = np.empty(rows.shape[0], dtype=np.int64)
    slack = np.empty(rows.shape[0])
    for r, e in enumerate(rows):
        acc = np.zeros(alt_mix.shape[1])
        for i in active:
            acc += lam[i] * null_ratio[i, e].astype(np.float64)
        A = alt_mix[e]
        f = forced[e]
        dec = np.where(f >= 0, f == 1, A >= acc)
        counts[r] = np.count_nonzero(dec)
        use = dec & (A > 0.0)
        slack[r] = np.sum(1.0 - acc[use] / A[use])
    return counts, slack


def _mix_dense_np(ratio, weights, rows):
    out = np.zeros((rows.shape[0], ratio.shape[2]))
    active = np.flatnonzero(weights > 0.0)
    for r, e in enumerate(rows):
        acc = out[r]
        for j in active:
            acc += weights[j] * ratio[j, e].astype(np.float64)
    return out


def _hermite_eval_np(s, step, vals, ders, tail_coef, lgb, b):
    s = np.asarray(s, dtype=np.float64)
    n_nodes = vals.shape[0]
    s_max = step * (n_nodes - 1)
    out = np.empty_like(s)
    inside = s < s_max
    x = s[inside] / step
    i = np.minimum(x.astype(np.int64), n_nodes - 2)
    t = x - i
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    out[inside] = (
        h00 * vals[i] + h10 * step * ders[i] + h01 * vals[i + 1] + h11 * step * ders[i + 1]
    )
    big = s[~inside]
    if big.size:
        series = np.ones_like(big)
        term = np.ones_like(big)
        for q in range(tail_coef.shape[0]):
            term = term / big
            series += tail_coef[q] * term
        out[~inside] = (
            lgb
            + (1.0 - b) * np.log(0.5 * big)
            - 0.5 * np.log(2.0 * np.pi * big)
            + np.log(series)
        )
    return out


def _iv_log_ratios_np(qs, qst, qt, c, d, lam, step, vals, ders, tail_coef, lgb, b):
    # (N, C) matrix of log f_theta(Q) - log f_ref(Q), ref = lambda 0.
    h = (
        (c * c)[None, :] * qs[:, None]
        + (2.0 * c * d)[None, :] * qst[:, None]
        + (d * d)[None, :] * qt[:, None]
    )
    np.maximum(h, 0.0, out=h)
    s = np.sqrt(lam[None, :] * h)
    logf = _hermite_eval_np(s, step, vals, ders, tail_coef, lgb, b) + s
    return logf - (0.5 * lam * (c * c + d * d))[None, :]


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if numba is not None:

    @njit(cache=True)
    def _null_mix_nb(null_ratio, lam, active, e, buf):
        # buf[m] = sum_i lam_i ratio[i, e, m], ascending i, vectorizable
        n = buf.shape[0]
        for m in range(n):
            buf[m] = 0.0
        for q in range(active.shape[0]):
            i = active[q]
            li = lam[i]
            for m in range(n):
                buf[m] += li * np.float64(null_ratio[i, e, m])

    @njit(parallel=True, cache=True)
    def _reject_counts_nb(null_ratio, lam, alt_mix, forced, rows):
        n = alt_mix.shape[1]
        active = np.flatnonzero(lam > 0.0)
        out = np.zeros(rows.shape[0], dtype=np.int64)
        for r in prange(rows.shape[0]):
            e = rows[r]
            buf = np.empty(n)
            _null_mix_nb(null_ratio, lam, active, e, buf)
            count = 0
            for m in range(n):
                f = forced[e, m]
                hit = 1 if alt_mix[e, m] >= buf[m] else 0
                count += f if f >= 0 else hit
            out[r] = count
        return out

    @njit(parallel=True, cache=True)
    def _reject_stats_nb(null_ratio, lam, alt_mix, forced, rows):
        n = alt_mix.shape[1]
        active = np.flatnonzero(lam > 0.0)
        counts = np.zeros(rows.shape[0], dtype=np.int64)
        slack = np.zeros(rows.shape[0])
        for r in prange(rows.shape[0]):
            e = rows[r]
            buf = np.empty(n)
            _null_mix_nb(null_ratio, lam, active, e, buf)
            count = 0
            total = 0.0
            for m in range(n):
                a = alt_mix[e, m]
                f = forced[e, m]
                hit = 1 if a >= buf[m] else 0
                dec = f if f >= 0 else hit
                count += dec
                if dec == 1 and a > 0.0:
                    total += 1.0 - buf[m] / a
            counts[r] = count
            slack[r] = total
        return counts, slack

    @njit(parallel=True, cache=True)
    def _mix_dense_nb(ratio, weights, rows):
        n = ratio.shape[2]
        out = np.zeros((rows.shape[0], n))
        for r in prange(rows.shape[0]):
            e = rows[r]
            for j in range(weights.shape[0]):
                w = weights[j]
                if w > 0.0:
                    for m in range(n):
                        out[r, m] += w * np.float64(ratio[j, e, m])
        return out

    @njit(cache=True, inline="always")
    def _hermite_scalar(s, step, vals, ders, tail_coef, lgb, b):
        n_nodes = vals.shape[0]
        if s < step * (n_nodes - 1):
            x = s / step
            i = min(np.int64(x), n_nodes - 2)
            t = x - i
            t2 = t * t
            t3 = t2 * t
            return (
                (2.0 * t3 - 3.0 * t2 + 1.0) * vals[i]
                + (t3 - 2.0 * t2 + t) * step * ders[i]
                + (-2.0 * t3 + 3.0 * t2) * vals[i + 1]
                + (t3 - t2) * step * ders[i + 1]
            )
        series = 1.0
        term = 1.0
        for q in range(tail_coef.shape[0]):
            term = term / s
            series += tail_coef[q] * term
        return (
            lgb
            + (1.0 - b) * math.log(0.5 * s)
            - 0.5 * math.log(2.0 * math.pi * s)
            + math.log(series)
        )

    @njit(parallel=True, cache=True)
    def _hermite_eval_nb(s, step, vals, ders, tail_coef, lgb, b):
        flat = s.ravel()
        out = np.empty(flat.shape[0])
        for i in prange(flat.shape[0]):
            out[i] = _hermite_scalar(flat[i], step, vals, ders, tail_coef, lgb, b)
        return out.reshape(s.shape)

    @njit(parallel=True, cache=True)
    def _iv_log_ratios_nb(qs, qst, qt, c, d, lam, step, vals, ders, tail_coef, lgb, b):
        n = qs.shape[0]
        n_comp = c.shape[0]
        out = np.empty((n, n_comp))
        for m in prange(n):
            for j in range(n_comp):
                h = c[j] * c[j] * qs[m] + 2.0 * c[j] * d[j] * qst[m] + d[j] * d[j] * qt[m]
                if h < 0.0:
                    h = 0.0
                s = math.sqrt(lam[j] * h)
                out[m, j] = (
                    _hermite_scalar(s, step, vals, ders, tail_coef, lgb, b)
                    + s
                    - 0.5 * lam[j] * (c[j] * c[j] + d[j] * d[j])
                )
        return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def set_threads(n: int) -> None:
    """Cap the number of worker threads used by parallel kernels."""
    if n < 1:
        raise ValueError("thread count must be positive")
    if numba is not None:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def reject_counts(null_ratio, lam, alt_mix, forced, rows):
    """Count draws where the alternative mixture beats the null mixture.

    Parameters
    ----------
    null_ratio : ndarray, shape (M0, P, N), float32
        Shifted density ratios ``exp(r_i - shift)`` of each null component.
    lam : ndarray, shape (M0,)
        Nonnegative multipliers; zero entries are skipped.
    alt_mix : ndarray, shape (P, N)
        Alternative mixture on the same shifted scale.
    forced : ndarray, shape (P, N), int8
        ``-1`` where the comparison applies, ``0``/``1`` where a switching
        rule has already fixed the decision.
    rows : ndarray of int64
        Which sources (second axis) to evaluate.

    Returns
    -------
    ndarray of int64
        Rejection counts per requested row.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if numba is not None:
        return _reject_counts_nb(null_ratio, lam, alt_mix, forced, rows)
    return _reject_counts_np(null_ratio, lam, alt_mix, forced, rows)


def reject_stats(null_ratio, lam, alt_mix, forced, rows):
    """Rejection counts plus the summed Lagrangian slack ``(1 - null/alt)`` over rejections.

    The slack sum divided by N estimates ``E_g[(1 - sum lam f / g)_+]`` from
    draws of the alternative, which is convex in the multipliers.
    Arguments as in :func:`reject_counts`.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if numba is not None:
        return _reject_stats_nb(null_ratio, lam, alt_mix, forced, rows)
    return _reject_stats_np(null_ratio, lam, alt_mix, forced, rows)


def mix_dense(ratio, weights, rows):
    """Weighted sum over the first axis of a (C, P, N) ratio block, in float64."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if numba is not None:
        return _mix_dense_nb(ratio, weights, rows)
    return _mix_dense_np(ratio, weights, rows)


def mix_factored(U, V, weights, scale, rows):
    """Alternative mixture for location families: ``scale * sum_j w_j U[:, j] V[e, j]``.

    A single matrix product, so both backends go through BLAS.
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    coef = np.asarray(weights, dtype=np.float64) * V[rows]
    return np.ascontiguousarray((U @ coef.T).T) * scale[rows]


def hermite_eval(s, table):
    """Evaluate a tabulated ``log 0F1(b; s^2/4) - s`` at arguments ``s >= 0``."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    args = (table.step, table.values, table.derivs, table.tail_coef, table.lgamma_b, table.b)
    if numba is not None:
        return _hermite_eval_nb(s, *args)
    return _hermite_eval_np(s, *args)


def iv_log_ratios(qs, qst, qt, c, d, lam, table):
    """Noncentral-Wishart log density ratios for many parameter points at once.

    Returns an (N, C) array ``-lam (c^2 + d^2) / 2 + log 0F1(k/2; lam h / 4)``
    with ``h = c^2 Q_S + 2 c d Q_ST + d^2 Q_T``.
    """
    arrs = [np.ascontiguousarray(a, dtype=np.float64) for a in (qs, qst, qt, c, d, lam)]
    args = (table.step, table.values, table.derivs, table.tail_coef, table.lgamma_b, table.b)
    if numba is not None:
        return _iv_log_ratios_nb(*arrs, *args)
    return _iv_log_ratios_np(*arrs, *args)
