"""Precomputed density ratios for evaluating Lagrange-form tests quickly.

For every *source* (a parameter point or null component where rejection
rates are needed) the bank is mapped to observations once, and each null
component's log ratio ``r_i`` against the reference density is stored as
``exp(r_i - s)`` with a per-draw shift ``s`` (the largest stored log ratio).
A test with multipliers ``lam`` and weights ``w`` rejects a draw when::

    sum_j w_j exp(r_j - s) >= sum_i lam_i exp(r_i - s)

so after one pass over the bank every iteration of the inner loop is a
multiply-add over the active multipliers only.

Alternative densities are stored the same way, except for location families
evaluated at point sources: there ``exp(r_j)`` splits into a per-draw factor
and a per-source factor and nothing of size (alternatives x sources x draws)
is kept.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .problem import AlternativeSupport, BaseDistribution, PointMass, as_component

__all__ = ["Evaluator", "envelope_rates", "DEFAULT_CACHE_BYTES"]



def _default_budget() -> int:
    env = os.environ.get("APENV_CACHE_BYTES")
    if env:
        return int(float(env))
    try:
        phys = os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return int(3e9)
    return int(min(3e9, 0.5 * phys))


DEFAULT_CACHE_BYTES = _default_budget()


@dataclass
class _Block:
    rows: np.ndarray  # global source indices
    null_ratio: np.ndarray  # (M0, p, N)
    forced: np.ndarray  # (p, N) int8
    dense_rows: np.ndarray  # local rows with a stored alternative block
    alt_ratio: np.ndarray | None  # (M1, len(dense_rows), N)
    fact_rows: np.ndarray  # local rows using the factored form
    fact_scale: np.ndarray | None  # (p, N) exp(-s), valid on fact_rows
    fact_V: np.ndarray | None  # (p, M1)

    @property
    def nbytes(self) -> int:
        total = self.null_ratio.nbytes + self.forced.nbytes
        for a in (self.alt_ratio, self.fact_scale, self.fact_V):
            if a is not None:
                total += a.nbytes
        return total


class Evaluator:
    """Rejection rates of Lagrange-form tests at a fixed list of sources.

    Parameters
    ----------
    problem : TestingProblem
    bank : DrawBank
    null : sequence of NullComponent
        Components carrying the multipliers.
    alt : AlternativeSupport
        Points carrying the weights.
    sources : sequence
        Points or null components at which rates are requested.
    switching : SwitchingRule, optional
    dtype : numpy dtype
        Storage type of the ratio blocks (float32 halves memory; the
        comparison itself is always accumulated in float64).
    cache_bytes : int, optional
        Memory budget for stored blocks. Past it, blocks are rebuilt on
        every call (slow but bounded).
    chunk : int, optional
        Sources per block.
    factorize : bool
        Use the location-family factorization when the problem offers it.
    """

    def __init__(
        self,
        problem,
        bank,
        null,
        alt,
        sources,
        switching=None,
        *,
        dtype=np.float32,
        cache_bytes: int | None = None,
        chunk: int | None = None,
        factorize: bool = True,
    ):
        self.problem = problem
        self.bank = bank
        self.null = tuple(as_component(c) for c in null)
        self.alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
        self.sources = [as_component(s) for s in sources]
        self.switching = switching
        self.dtype = np.dtype(dtype)
        self.M0 = len(self.null)
        self.M1 = len(self.alt)
        self.P = len(self.sources)
        self.N = bank.n_draws
        if bank.dim != problem.dim_base:
            raise ValueError(f"bank has {bank.dim} columns but {problem.name} needs {problem.dim_base}")
        budget = DEFAULT_CACHE_BYTES if cache_bytes is None else int(cache_bytes)

        self._alt_thetas = self.alt.as_array()
        self._fact = None
        if factorize and problem.factorizable:
            self._fact = self._factor_setup()

        per_source = self.N * (self.M0 * self.dtype.itemsize + 1 + 8)
        per_dense_alt = self.N * self.M1 * self.dtype.itemsize
        n_dense = sum(1 for e in range(self.P) if not self._is_factored(e))
        fixed = 0 if self._fact is None else self._fact[0].nbytes
        total = fixed + self.P * per_source + n_dense * per_dense_alt
        self.cached = total <= budget
        if chunk is None:
            per = per_source + (per_dense_alt if n_dense else 0)
            chunk = self.P if self.cached else max(1, int(min(budget, 2e8) // max(per, 1)))
        self.chunk = max(1, int(chunk))
        self._chunks = [np.arange(lo, min(lo + self.chunk, self.P)) for lo in range(0, self.P, self.chunk)]
        self._blocks: dict[int, _Block] = {}
        self._alt_mix: dict[int, np.ndarray] = {}
        self._weights = None
        self._adhoc_cache: dict[int, np.ndarray] = {}

    # -- setup ----------------------------------------------------------------

    def _factor_setup(self):
        eta, a = self.problem.natural_params(self._alt_thetas)
        ref = self.problem.reference_point.as_array()
        y0 = self.problem.sample(self.bank.base, ref)
        with np.errstate(over="ignore"):
            U = np.exp(y0 @ eta.T)
        if not np.all(np.isfinite(U)):
            return None
        loc_ref = self.problem.location(ref[None, :])[0]
        return np.ascontiguousarray(U), eta, a, loc_ref

    def _is_factored(self, e: int) -> bool:
        return self._fact is not None and isinstance(self.sources[e], PointMass)

    def _build_block(self, rows: np.ndarray) -> _Block:
        prob, bank = self.problem, self.bank
        p = len(rows)
        null_ratio = np.empty((self.M0, p, self.N), dtype=self.dtype)
        forced = np.full((p, self.N), -1, dtype=np.int8)
        fact_local = [r for r, e in enumerate(rows) if self._is_factored(e)]
        dense_local = [r for r, e in enumerate(rows) if not self._is_factored(e)]
        alt_ratio = np.empty((self.M1, len(dense_local), self.N), dtype=self.dtype) if dense_local else None
        fact_scale = np.zeros((p, self.N)) if fact_local else None
        fact_V = np.zeros((p, self.M1)) if fact_local else None

        point_idx = [i for i, c in enumerate(self.null) if isinstance(c, PointMass)]
        point_thetas = np.array([self.null[i].point.coords for i in point_idx]) if point_idx else None
        base_idx = [i for i, c in enumerate(self.null) if isinstance(c, BaseDistribution)]
        dense_pos = {r: q for q, r in enumerate(dense_local)}

        for r, e in enumerate(rows):
            src = self.sources[e]
            y = prob.sample_component(bank.base, src, bank.strata)
            if self.switching is not None:
                forced[r] = self.switching.forced(y)
            L0 = np.empty((self.N, self.M0))
            if point_idx:
                L0[:, point_idx] = prob.log_ratio(point_thetas, y)
            for i in base_idx:
                L0[:, i] = prob.component_log_ratio(self.null[i], y)
            shift = L0.max(axis=1)
            if r in dense_pos:
                L1 = prob.log_ratio(self._alt_thetas, y)
                shift = np.maximum(shift, L1.max(axis=1))
                alt_ratio[:, dense_pos[r], :] = np.exp(L1 - shift[:, None]).T
            else:
                _, eta, a, loc_ref = self._fact
                loc = prob.location(src.point.as_array()[None, :])[0] - loc_ref
                fact_V[r] = np.exp(eta @ loc - a)
                fact_scale[r] = np.exp(-shift)
            if not np.all(np.isfinite(shift)):
                raise FloatingPointError(f"non-finite null density at source {src.describe()}")
            null_ratio[:, r, :] = np.exp(L0 - shift[:, None]).T
        return _Block(
            rows=np.asarray(rows),
            null_ratio=null_ratio,
            forced=forced,
            dense_rows=np.asarray(dense_local, dtype=np.int64),
            alt_ratio=alt_ratio,
            fact_rows=np.asarray(fact_local, dtype=np.int64),
            fact_scale=fact_scale,
            fact_V=fact_V,
        )

    def _block(self, b: int) -> _Block:
        blk = self._blocks.get(b)
        if blk is None:
            blk = self._build_block(self._chunks[b])
            if self.cached:
                self._blocks[b] = blk
        return blk

    def prepare(self) -> "Evaluator":
        """Build every block now (only meaningful when caching)."""
        if self.cached:
            for b in range(len(self._chunks)):
                self._block(b)
        return self

    @property
    def nbytes(self) -> int:
        return sum(blk.nbytes for blk in self._blocks.values())

    # -- evaluation -----------------------------------------------------------

    def set_weights(self, weights) -> None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.M1,):
            raise ValueError(f"{w.size} weights for {self.M1} alternative points")
        if self._weights is not None and np.array_equal(w, self._weights):
            return
        self._weights = w.copy()
        self._alt_mix.clear()

    def _mixture(self, b: int, blk: _Block) -> np.ndarray:
        A = self._alt_mix.get(b)
        if A is not None:
            return A
        w = self._weights
        if w is None:
            raise RuntimeError("set_weights must be called before evaluating rates")
        A = np.zeros((len(blk.rows), self.N))
        if blk.alt_ratio is not None:
            A[blk.dense_rows] = _kernels.mix_dense(blk.alt_ratio, w, np.arange(len(blk.dense_rows)))
        if blk.fact_rows.size:
            A[blk.fact_rows] = _kernels.mix_factored(self._fact[0], blk.fact_V, w, blk.fact_scale, blk.fact_rows)
        if self.cached:
            self._alt_mix[b] = A
        return A

    def counts(self, multipliers, rows=None) -> np.ndarray:
        """Rejection counts at the requested sources (all by default)."""
        lam = self._check_lam(multipliers)
        rows = np.arange(self.P) if rows is None else np.asarray(rows, dtype=np.int64)
        out = np.empty(rows.size, dtype=np.int64)
        for b, chunk in enumerate(self._chunks):
            lo, hi = chunk[0], chunk[-1] + 1
            sel = np.flatnonzero((rows >= lo) & (rows < hi))
            if sel.size == 0:
                continue
            blk = self._block(b)
            A = self._mixture(b, blk)
            out[sel] = _kernels.reject_counts(blk.null_ratio, lam, A, blk.forced, rows[sel] - lo)
        return out

    def stats(self, multipliers, rows=None):
        """Rejection frequencies and mean Lagrangian slack at the requested sources.

        The slack at a source drawn from ``f_j`` is the bank average of
        ``(1 - sum_i lam_i f_i / g)`` over rejected draws (only the
        forced-reject part can be negative), so ``sum_j w_j slack_j + alpha
        sum lam`` estimates the dual objective as a convex function of the
        multipliers.
        """
        lam = self._check_lam(multipliers)
        rows = np.arange(self.P) if rows is None else np.asarray(rows, dtype=np.int64)
        counts = np.empty(rows.size, dtype=np.int64)
        slack = np.empty(rows.size)
        for b, chunk in enumerate(self._chunks):
            lo, hi = chunk[0], chunk[-1] + 1
            sel = np.flatnonzero((rows >= lo) & (rows < hi))
            if sel.size == 0:
                continue
            blk = self._block(b)
            A = self._mixture(b, blk)
            counts[sel], slack[sel] = _kernels.reject_stats(blk.null_ratio, lam, A, blk.forced, rows[sel] - lo)
        return counts / self.N, slack / self.N

    def _check_lam(self, multipliers):
        lam = np.asarray(multipliers, dtype=np.float64)
        if lam.shape != (self.M0,):
            raise ValueError(f"{lam.size} multipliers for {self.M0} null components")
        if np.any(lam < 0):
            raise ValueError("multipliers must be nonnegative")
        return lam

    def rates(self, multipliers, rows=None) -> np.ndarray:
        """Rejection frequencies ``count / N`` at the requested sources."""
        return self.counts(multipliers, rows) / self.N

    def adhoc_rates(self, test) -> np.ndarray:
        """Rejection frequencies of an ad hoc test at every source."""
        key = id(test)
        hit = self._adhoc_cache.get(key)
        if hit is not None:
            return hit
        out = np.empty(self.P)
        for e, src in enumerate(self.sources):
            y = self.problem.sample_component(self.bank.base, src, self.bank.strata)
            out[e] = np.sum(test(y)) / self.N
        self._adhoc_cache[key] = out
        return out


def envelope_rates(test, sources, bank, problem, *, cache_bytes: int | None = None) -> np.ndarray:
    """Rejection frequencies of a Lagrange-form test at arbitrary sources."""
    sources = [as_component(s) for s in sources]
    if not sources:
        return np.empty(0)
    budget = DEFAULT_CACHE_BYTES if cache_bytes is None else cache_bytes
    # single pass, so nothing is kept: stream blocks sized to the budget
    per = bank.n_draws * (len(test.null) * 4 + 17 + len(test.alt) * 4)
    chunk = max(1, min(len(sources), int(min(budget, 4e8) // max(per, 1))))
    ev = Evaluator(problem, bank, test.null, test.alt, sources, test.switching, cache_bytes=0, chunk=chunk)
    ev.set_weights(test.weights)
    return ev.rates(test.multipliers)
