"""WAP-maximizing tests for fixed weights via dual subgradient descent.

For weights ``w`` on the alternative support and multipliers ``lam >= 0``
on the null components, the Lagrangian is maximized by the test that
rejects when ``sum_j w_j f_j(y) >= sum_i lam_i f_i(y)``. Minimizing the
dual over ``lam`` gives the approximate WAP-maximizing size-alpha test.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evaluator import Evaluator
from .problem import AlternativeSupport, PointMass, as_component, component_from_dict
from .schedules import AdaptiveDualSchedule
from .simplex import check_weights

__all__ = [
    "NpTest",
    "DualTrace",
    "np_decide",
    "dual_value",
    "run_inner",
    "to_neyman_pearson",
    "inner_gap_bound",
    "loop_evaluator",
]

log = logging.getLogger(__name__)


@dataclass
class NpTest:
    """Lagrange-form test: reject iff ``sum w_j f_j >= sum lam_i f_i``.

    Attributes
    ----------
    null : tuple of NullComponent
    alt : AlternativeSupport
    weights : ndarray, shape (M1,)
    multipliers : ndarray, shape (M0,)
    alpha : float
    switching : SwitchingRule or None
        Applied before the density comparison.
    """

    null: tuple
    alt: AlternativeSupport
    weights: np.ndarray
    multipliers: np.ndarray
    alpha: float
    switching: object = None

    def __post_init__(self):
        self.null = tuple(as_component(c) for c in self.null)
        self.alt = self.alt if isinstance(self.alt, AlternativeSupport) else AlternativeSupport(self.alt)
        self.weights = check_weights(self.weights, len(self.alt))
        lam = np.asarray(self.multipliers, dtype=np.float64)
        if lam.shape != (len(self.null),):
            raise ValueError(f"{lam.size} multipliers for {len(self.null)} null components")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("multipliers must be finite and nonnegative")
        self.multipliers = lam

    def decide(self, y, problem) -> np.ndarray:
        return np_decide(self, y, problem)

    def to_dict(self) -> dict:
        out = {
            "alpha": self.alpha,
            "null_components": [c.to_dict() for c in self.null],
            "multipliers": self.multipliers.tolist(),
            "alt_points": [list(p.coords) for p in self.alt],
            "weights": self.weights.tolist(),
            "switching": None if self.switching is None else self.switching.to_dict(),
        }
        if self.multipliers.sum() > 0:
            cv, lfd = to_neyman_pearson(self)
            out["critical_value"] = cv
            out["lfd_weights"] = lfd.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict, switching=None) -> "NpTest":
        return cls(
            null=tuple(component_from_dict(c) for c in d["null_components"]),
            alt=AlternativeSupport(d["alt_points"]),
            weights=np.asarray(d["weights"]),
            multipliers=np.asarray(d["multipliers"]),
            alpha=float(d["alpha"]),
            switching=switching,
        )


def np_decide(test: NpTest, y, problem) -> np.ndarray:
    """Decisions of a Lagrange-form test at observations ``y``.

    Returns an int array of 0/1. The comparison is done on log ratios
    against the reference density, shifted per observation by the largest
    one. Ties reject. A switching rule, if any, overrides the comparison.
    """
    y = problem._as_obs(y)
    l0 = np.column_stack([problem.component_log_ratio(c, y) for c in test.null])
    l1 = problem.point_log_ratios(test.alt.points, y)
    if not (np.all(np.isfinite(l0)) and np.all(np.isfinite(l1))):
        raise FloatingPointError("non-finite density in np_decide")
    shift = np.maximum(l0.max(axis=1), l1.max(axis=1))[:, None]
    g = np.exp(l1 - shift) @ test.weights
    f = np.exp(l0 - shift) @ test.multipliers
    dec = (g >= f).astype(np.int64)
    if test.switching is not None:
        forced = test.switching.forced(y)
        dec = np.where(forced >= 0, forced, dec)
    return dec


def to_neyman_pearson(test: NpTest):
    """Critical value ``sum lam`` and least-favorable weights ``lam / sum lam``."""
    total = float(np.sum(test.multipliers))
    if total <= 0:
        raise ValueError("all multipliers are zero: the test rejects everywhere and has no critical value")
    return total, test.multipliers / total


def loop_evaluator(problem, bank, null, alt, switching=None, **kw) -> Evaluator:
    """Evaluator whose sources are the null components followed by the alternative points."""
    null = tuple(as_component(c) for c in null)
    alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
    sources = list(null) + [PointMass(p) for p in alt]
    return Evaluator(problem, bank, null, alt, sources, switching, **kw)


def _check_loop_evaluator(ev: Evaluator, null, alt):
    if ev.M0 != len(null) or ev.M1 != len(alt) or ev.P != ev.M0 + ev.M1:
        raise ValueError("evaluator does not match the supports (use loop_evaluator)")


def dual_value(
    multipliers, weights, null, alt, bank, problem, alpha, switching=None, evaluator=None, estimator: str = "direct"
) -> float:
    """Monte Carlo estimate of the dual objective at ``multipliers``.

    ``estimator="direct"`` plugs bank estimates of every rejection
    probability into ``sum_j w_j P_j(reject) - sum_i lam_i (P_i(reject) - alpha)``.
    ``estimator="smoothed"`` instead averages the Lagrangian slack
    ``(1 - sum_i lam_i f_i / g)`` over the rejected draws of the alternative
    sources and adds ``alpha sum_i lam_i``; it targets the same quantity but
    is convex in the multipliers, so comparisons between nearby multipliers
    are free of threshold-crossing noise.
    """
    if estimator not in ("direct", "smoothed"):
        raise ValueError("estimator must be 'direct' or 'smoothed'")
    null = tuple(as_component(c) for c in null)
    alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
    lam = np.asarray(multipliers, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    w = check_weights(weights, len(alt))
    ev = evaluator or loop_evaluator(problem, bank, null, alt, switching)
    _check_loop_evaluator(ev, null, alt)
    ev.set_weights(w)
    if estimator == "smoothed":
        act = np.flatnonzero(w > 0)
        _, slack = ev.stats(lam, ev.M0 + act)
        return float(w[act] @ slack + alpha * lam.sum())
    rates = ev.rates(lam)
    sizes, power = rates[: ev.M0], rates[ev.M0 :]
    return float(w @ power - lam @ (sizes - alpha))


@dataclass
class DualTrace:
    """Record of one inner-loop run.

    ``dual[k]`` is the direct dual estimate at iterate ``k`` and
    ``smoothed[k]`` the convex one (both NaN when skipped by the stride).
    ``best[k]`` is the smallest value of the selection criterion seen so
    far, ``steps[k]`` the step taken from iterate ``k`` and ``norms[k]`` the
    subgradient norm there.
    """

    dual: list = field(default_factory=list)
    smoothed: list = field(default_factory=list)
    best: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    best_index: int = -1
    best_multipliers: np.ndarray | None = None
    stopped_early: bool = False

    @property
    def n_iterates(self) -> int:
        return len(self.dual)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            m0 = len(self.sizes[0]) if self.sizes else 0
            head = ["iteration", "dual_value", "smoothed_dual", "best_value", "subgradient_norm", "step"]
            w.writerow(head + [f"size_{i + 1}" for i in range(m0)])
            for k in range(len(self.dual)):
                row = [k, _fmt(self.dual[k]), _fmt(self.smoothed[k]), _fmt(self.best[k]), _fmt(self.norms[k])]
                row.append(_fmt(self.steps[k]) if k < len(self.steps) else "")
                row += [_fmt(v) for v in self.sizes[k]]
                w.writerow(row)


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else f"{x:.6g}"


def run_inner(
    weights,
    null,
    alt,
    bank,
    problem,
    alpha: float,
    schedule=None,
    n_iter: int = 1000,
    *,
    switching=None,
    init=None,
    evaluator: Evaluator | None = None,
    normalize: str = "vector",
    dual_stride: int = 1,
    selection: str = "smoothed",
):
    """Dual subgradient descent for the WAP-maximizing test at fixed weights.

    Parameters
    ----------
    weights : array_like, shape (M1,)
        Point on the simplex over ``alt``.
    null : sequence of NullComponent
    alt : AlternativeSupport
    bank : DrawBank
    problem : TestingProblem
    alpha : float
        Nominal level.
    schedule : callable, optional
        ``schedule(k, tau, lam) -> step``; defaults to the adaptive rule.
    n_iter : int
        Number of multiplier updates (``n_iter + 1`` iterates are scored).
    switching : SwitchingRule, optional
    init : array_like, optional
        Starting multipliers (zeros by default).
    evaluator : Evaluator, optional
        Reused across calls by the outer loop; must come from
        :func:`loop_evaluator` for the same supports.
    normalize : {"vector", "sign"}
        Divide ``tau`` by its Euclidean norm, or step along ``sign(tau)``.
    dual_stride : int
        Score the dual every this many iterates (the sizes are needed every
        iterate anyway; skipping the power evaluation saves time).
    selection : {"smoothed", "direct", "last"}
        Which iterate to return: smallest smoothed dual estimate (default),
        smallest direct estimate, or simply the final iterate.

    Returns
    -------
    NpTest
        Test at the iterate with the smallest dual value.
    DualTrace
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if normalize not in ("vector", "sign"):
        raise ValueError("normalize must be 'vector' or 'sign'")
    if selection not in ("smoothed", "direct", "last"):
        raise ValueError("selection must be 'smoothed', 'direct' or 'last'")
    null = tuple(as_component(c) for c in null)
    alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
    w = check_weights(weights, len(alt))
    schedule = schedule or AdaptiveDualSchedule()
    ev = evaluator or loop_evaluator(problem, bank, null, alt, switching)
    _check_loop_evaluator(ev, null, alt)
    ev.set_weights(w)
    m0 = len(null)
    lam = np.zeros(m0) if init is None else np.maximum(np.asarray(init, dtype=np.float64), 0.0)
    if lam.shape != (m0,):
        raise ValueError(f"initial multipliers have length {lam.size}, expected {m0}")
    null_rows = np.arange(m0)
    act = np.flatnonzero(w > 0)
    alt_rows = m0 + act

    trace = DualTrace()
    best_val, best_lam, best_k = math.inf, lam.copy(), 0

    def score(k, lam, tau):
        rates, slack = ev.stats(lam, alt_rows)
        direct = float(w[act] @ rates - lam @ tau)
        smooth = float(w[act] @ slack + alpha * lam.sum())
        trace.dual[k], trace.smoothed[k] = direct, smooth
        crit = {"smoothed": smooth, "direct": direct, "last": -float(k)}[selection]
        return crit

    for k in range(n_iter + 1):
        sizes = ev.rates(lam, null_rows)
        tau = sizes - alpha
        norm = float(np.linalg.norm(tau))
        trace.dual.append(math.nan)
        trace.smoothed.append(math.nan)
        trace.norms.append(norm)
        trace.sizes.append(sizes)
        last = k == n_iter or norm == 0.0
        if k % dual_stride == 0 or last:
            crit = score(k, lam, tau)
            if crit < best_val:
                best_val, best_lam, best_k = crit, lam.copy(), k
        trace.best.append(best_val)
        if last:
            if norm == 0.0 and k < n_iter:
                log.info("inner loop: zero subgradient at iterate %d, stopping", k)
                trace.stopped_early = True
            break
        h = float(schedule(k, tau, lam))
        trace.steps.append(h)
        direction = np.sign(tau) if normalize == "sign" else tau / norm
        lam = np.maximum(lam + h * direction, 0.0)

    trace.best_index = best_k
    trace.best_multipliers = best_lam
    test = NpTest(null=null, alt=alt, weights=w, multipliers=best_lam, alpha=alpha, switching=switching)
    return test, trace


def inner_gap_bound(steps, dist0_sq: float, n_null: int, alpha: float) -> np.ndarray:
    """Upper bound on ``best dual - optimal dual`` after each iterate.

    ``sqrt(M0 max(1 - alpha, alpha)) (R^2 + sum h_i^2) / (2 sum h_i)`` with
    sums over the steps up to and including the current iterate and ``R``
    the distance from the start to a minimizer.
    """
    h = np.asarray(steps, dtype=np.float64)
    lip = math.sqrt(n_null * max(1.0 - alpha, alpha))
    return lip * (dist0_sq + np.cumsum(h**2)) / (2.0 * np.cumsum(h))
