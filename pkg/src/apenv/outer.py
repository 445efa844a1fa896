"""Projected subgradient descent over alternative weights.

Each iteration fits the WAP-maximizing test for the current weights, measures
its power shortfall against the ad hoc test at every alternative support
point, and moves weight toward the points where the shortfall is worst.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .inner import _fmt, loop_evaluator, run_inner
from .montecarlo import rejection_rates
from .problem import AdHocTest, AlternativeSupport, PointMass, as_component
from .schedules import AdaptiveDualSchedule, AdaptiveWeightSchedule
from .simplex import check_weights, project_simplex

__all__ = ["OuterTrace", "power_gap_vector", "run_outer", "outer_gap_bound"]

log = logging.getLogger(__name__)


def power_gap_vector(test, ad_hoc, alt, bank, problem) -> np.ndarray:
    """Envelope power minus ad hoc power at each alternative support point.

    Both rates come from the same bank, so the differences carry no
    independent simulation noise.
    """
    alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
    pts = [PointMass(p) for p in alt]
    if not isinstance(ad_hoc, AdHocTest):
        ad_hoc = AdHocTest(ad_hoc)
    return rejection_rates(test, pts, bank, problem) - rejection_rates(ad_hoc, pts, bank, problem)


@dataclass
class OuterTrace:
    """Per-iteration record of the weight loop.

    ``objective[k]`` is ``sum_j w_j gamma_j`` at iterate ``k``. ``score[k]``
    is the quantity used to pick the returned iterate and ``best[k]`` its
    running minimum.
    """

    weights: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    score: list = field(default_factory=list)
    best: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    max_size: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    best_index: int = -1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            m1 = len(self.weights[0]) if self.weights else 0
            head = ["iteration"] + [f"w_{j + 1}" for j in range(m1)] + [f"gamma_{j + 1}" for j in range(m1)]
            w.writerow(head + ["objective", "score", "best_score", "step", "max_null_size"])
            for k in range(len(self.objective)):
                row = [k] + [_fmt(v) for v in self.weights[k]] + [_fmt(v) for v in self.gamma[k]]
                row += [_fmt(self.objective[k]), _fmt(self.score[k]), _fmt(self.best[k])]
                row.append(_fmt(self.steps[k]) if k < len(self.steps) else "")
                row.append(_fmt(self.max_size[k]))
                w.writerow(row)


def run_outer(
    ad_hoc,
    init_weights,
    null,
    alt,
    bank,
    problem,
    alpha: float,
    schedule=None,
    n_iter: int = 1000,
    *,
    switching=None,
    inner_iter: int = 1000,
    warm_inner: int | None = None,
    inner_schedule=None,
    init_multipliers=None,
    normalize: str = "vector",
    select: str = "last",
    evaluator=None,
    inner_kwargs: dict | None = None,
):
    """Minimize the WAP gap to an ad hoc test over the weight simplex.

    Parameters
    ----------
    ad_hoc : AdHocTest or callable
    init_weights : array_like, shape (M1,)
        Starting point on the simplex.
    null, alt, bank, problem, alpha
        As for :func:`apenv.inner.run_inner`.
    schedule : callable, optional
        ``schedule(k, gamma) -> step``; adaptive on ``min gamma`` by default.
    n_iter : int
        Number of weight evaluations; ``n_iter - 1`` projected steps are taken.
    switching : SwitchingRule, optional
    inner_iter : int
        Inner iterations for the first (cold) inner run.
    warm_inner : int, optional
        Inner iterations for later runs, each started from the previous
        multipliers. Defaults to ``inner_iter``.
    inner_schedule : callable, optional
    init_multipliers : array_like, optional
        Start of the first inner run.
    normalize : {"vector", "sign"}
        Direction ``gamma / ||gamma||`` or ``sign(gamma)``.
    select : {"last", "dual", "gap"}
        Which iterate to return. ``"gap"`` takes the one with the smallest
        ``sum_j w_j gamma_j``. ``"dual"`` adds ``sum_i lam_i (alpha - size_i)``
        to that score, turning it into the Lagrangian bound on the WAP gap,
        so an inner run that has not converged scores high instead of low.
        ``"last"`` returns the final iterate. Near the optimum the gap is
        flat to second order while its Monte Carlo noise is not, so the
        score-based picks can land anywhere in a noise-sized neighbourhood;
        the direction of ``gamma`` stays informative, which is why the
        final iterate is the default.
    evaluator : Evaluator, optional
        Shared with the inner loop; built here if omitted.
    inner_kwargs : dict, optional
        Extra keyword arguments for :func:`apenv.inner.run_inner`.

    Returns
    -------
    NpTest
        The inner-loop test at the best iterate.
    ndarray
        Weights at the best iterate.
    OuterTrace
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if normalize not in ("vector", "sign"):
        raise ValueError("normalize must be 'vector' or 'sign'")
    if select not in ("last", "dual", "gap"):
        raise ValueError("select must be 'last', 'dual' or 'gap'")
    null = tuple(as_component(c) for c in null)
    alt = alt if isinstance(alt, AlternativeSupport) else AlternativeSupport(alt)
    if not isinstance(ad_hoc, AdHocTest):
        ad_hoc = AdHocTest(ad_hoc)
    w = check_weights(np.array(init_weights, dtype=np.float64), len(alt))
    schedule = schedule or AdaptiveWeightSchedule()
    inner_schedule = inner_schedule or AdaptiveDualSchedule()
    warm_inner = inner_iter if warm_inner is None else warm_inner
    ev = evaluator or loop_evaluator(problem, bank, null, alt, switching)
    m0 = len(null)
    null_rows = np.arange(m0)
    alt_rows = m0 + np.arange(len(alt))
    adhoc_power = ev.adhoc_rates(ad_hoc)[alt_rows]
    kw = dict(inner_kwargs or {})

    trace = OuterTrace()
    lam = init_multipliers
    best = (math.inf, None, None, 0)
    running = math.inf
    for k in range(n_iter):
        test, itrace = run_inner(
            w,
            null,
            alt,
            bank,
            problem,
            alpha,
            inner_schedule,
            inner_iter if k == 0 else warm_inner,
            switching=switching,
            init=lam,
            evaluator=ev,
            **kw,
        )
        lam = test.multipliers
        gamma = ev.rates(lam, alt_rows) - adhoc_power
        obj = float(w @ gamma)
        score = obj
        if select == "dual":
            score += float(lam @ (alpha - ev.rates(lam, null_rows)))
        trace.weights.append(w.copy())
        trace.gamma.append(gamma)
        trace.objective.append(obj)
        trace.score.append(score)
        trace.max_size.append(float(np.max(itrace.sizes[itrace.best_index])))
        trace.inner_iterations.append(itrace.n_iterates - 1)
        if score < best[0] or (select == "last" and k == n_iter - 1):
            best = (score, test, w.copy(), k)
        running = min(running, score)
        trace.best.append(running)
        if k == n_iter - 1:
            break
        norm = float(np.linalg.norm(gamma))
        if norm == 0.0:
            # envelope already matches the ad hoc test everywhere on the support
            trace.steps.append(0.0)
            continue
        h = float(schedule(k, gamma))
        trace.steps.append(h)
        direction = np.sign(gamma) if normalize == "sign" else gamma / norm
        w = project_simplex(w - h * direction)

    trace.best_index = best[3]
    return best[1], best[2], trace


def outer_gap_bound(steps, dist0_sq: float, n_alt: int) -> np.ndarray:
    """``sqrt(M1) (R^2 + sum h_i^2) / (2 sum h_i)`` after each step."""
    h = np.asarray(steps, dtype=np.float64)
    return math.sqrt(n_alt) * (dist0_sq + np.cumsum(h**2)) / (2.0 * np.cumsum(h))
