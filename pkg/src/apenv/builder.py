"""Approximate power envelope construction with support-point refinement.

:func:`build_ape` fits the most favorable WAP-maximizing test on the fit
bank, checks its size on a fine null grid and its power against the ad hoc
test on a fine alternative grid (both on an independent verify bank), adds
violating points to the supports and refits until the checks pass or the
refinement budget runs out.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .inner import NpTest, _fmt, loop_evaluator, to_neyman_pearson
from .montecarlo import DrawBank, rejection_rates
from .outer import OuterTrace, run_outer
from .problem import AdHocTest, AlternativeSupport, PointMass, as_component, as_point
from .schedules import AdaptiveDualSchedule, AdaptiveWeightSchedule
from .simplex import check_weights, uniform_weights

__all__ = [
    "OPTIMAL",
    "DOMINATED",
    "INCONCLUSIVE",
    "ThresholdConfig",
    "LoopConfig",
    "ApeReport",
    "build_ape",
    "classify",
    "heatmap_grid",
    "wap_comparison",
]

log = logging.getLogger(__name__)

OPTIMAL = "EffectivelyOptimal"
DOMINATED = "EffectivelyDominated"
INCONCLUSIVE = "Inconclusive"


@dataclass
class ThresholdConfig:
    """Tolerances and fine grids for the size and dominance checks.

    Attributes
    ----------
    epsilon : float
        Allowed size excess on the null grid and allowed power shortfall of
        the envelope on the alternative grid.
    fine_null_grid, fine_alt_grid : list of ParameterPoint
    max_refinements : int
        Support-point additions allowed before giving up.
    dominance_epsilon : float, optional
        Envelope excess above which the ad hoc test counts as dominated.
        Defaults to ``epsilon``.
    max_added : int
        Cap on points added per refinement.
    """

    epsilon: float = 0.005
    fine_null_grid: list = field(default_factory=list)
    fine_alt_grid: list = field(default_factory=list)
    max_refinements: int = 10
    dominance_epsilon: float | None = None
    max_added: int = 5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.dominance_epsilon is None:
            self.dominance_epsilon = self.epsilon
        if not self.dominance_epsilon > 0:
            raise ValueError("dominance_epsilon must be positive")
        if not self.fine_null_grid or not self.fine_alt_grid:
            raise ValueError("fine grids must be nonempty")
        self.fine_null_grid = [as_component(c) for c in self.fine_null_grid]
        self.fine_alt_grid = [as_point(p) for p in self.fine_alt_grid]
        if self.max_refinements < 0 or self.max_added < 1:
            raise ValueError("max_refinements must be >= 0 and max_added >= 1")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "dominance_epsilon": self.dominance_epsilon,
            "max_refinements": self.max_refinements,
            "max_added": self.max_added,
            "n_fine_null": len(self.fine_null_grid),
            "n_fine_alt": len(self.fine_alt_grid),
        }


@dataclass
class LoopConfig:
    """Iteration counts and step rules for the two loops.

    ``warm_inner`` inner iterations are used after the first outer
    iteration, starting from the previous multipliers. ``max_rounds``
    bounds how often the outer loop is restarted (from where it stopped)
    when its exit checks fail on the fit bank.
    """

    n_outer: int = 1000
    n_inner: int = 1000
    warm_inner: int | None = None
    inner_schedule: object = None
    outer_schedule: object = None
    normalize: str = "vector"
    max_rounds: int = 1
    selection: str = "smoothed"
    outer_select: str = "last"
    dual_stride: int = 1

    def __post_init__(self):
        self.inner_schedule = self.inner_schedule or AdaptiveDualSchedule()
        self.outer_schedule = self.outer_schedule or AdaptiveWeightSchedule()
        if self.n_outer < 1 or self.n_inner < 1 or self.max_rounds < 1 or self.dual_stride < 1:
            raise ValueError("iteration counts must be positive")

    def to_dict(self) -> dict:
        return {
            "n_outer": self.n_outer,
            "n_inner": self.n_inner,
            "warm_inner": self.warm_inner,
            "inner_schedule": self.inner_schedule.to_dict(),
            "outer_schedule": self.outer_schedule.to_dict(),
            "normalize": self.normalize,
            "max_rounds": self.max_rounds,
            "selection": self.selection,
            "outer_select": self.outer_select,
            "dual_stride": self.dual_stride,
        }


def classify(diff, null_sizes, alpha: float, epsilon: float, dominance_epsilon: float | None = None) -> str:
    """Verdict from power differences on the fine alternative grid.

    Optimal when every difference is within ``dominance_epsilon`` of zero
    and no null size exceeds ``alpha + epsilon``; dominated when the
    envelope is never more than ``epsilon`` below the ad hoc test and
    somewhere more than ``dominance_epsilon`` above it; inconclusive
    otherwise.
    """
    dom = epsilon if dominance_epsilon is None else dominance_epsilon
    diff = np.asarray(diff, dtype=np.float64)
    size_ok = bool(np.all(np.asarray(null_sizes) <= alpha + epsilon))
    if not size_ok or np.any(diff < -epsilon):
        return INCONCLUSIVE
    if np.all(np.abs(diff) <= dom):
        return OPTIMAL
    if np.any(diff > dom):
        return DOMINATED
    return INCONCLUSIVE


def _pick_violators(points, excess, threshold: float, cap: int):
    """Worst violator plus any exceeding twice the threshold, at most ``cap``."""
    excess = np.asarray(excess, dtype=np.float64)
    bad = np.flatnonzero(excess > threshold)
    if bad.size == 0:
        return []
    order = bad[np.argsort(-excess[bad], kind="stable")]
    keep = [order[0]] + [i for i in order[1:] if excess[i] > 2 * threshold]
    return [points[i] for i in keep[:cap]]


@dataclass
class ApeReport:
    """Outcome of :func:`build_ape`.

    Power surfaces are evaluated on the verify bank. ``diff_pp`` is
    ``(envelope - ad hoc) * 100``. The problem, banks and test objects are
    kept for follow-up evaluations but are not serialized.
    """

    problem_name: str
    alpha: float
    verdict: str
    thresholds: ThresholdConfig
    test: NpTest
    alt_grid: list
    power_envelope: np.ndarray
    power_adhoc: np.ndarray
    null_grid: list
    null_envelope: np.ndarray
    null_adhoc: np.ndarray
    history: list
    outer_trace: OuterTrace | None = None
    inner_sizes: np.ndarray | None = None
    violators: list = field(default_factory=list)
    switching_check: dict | None = None
    adhoc_name: str = ""
    fit_seed: int | None = None
    verify_seed: int | None = None
    n_draws: int | None = None
    problem: object = field(default=None, repr=False)
    ad_hoc: object = field(default=None, repr=False)
    verify_bank: DrawBank | None = field(default=None, repr=False)

    @property
    def final_weights(self) -> np.ndarray:
        return self.test.weights

    @property
    def diff(self) -> np.ndarray:
        return self.power_envelope - self.power_adhoc

    @property
    def diff_pp(self) -> np.ndarray:
        return np.round(100.0 * self.diff, 3)

    def max_diff_point(self):
        i = int(np.argmax(self.diff))
        return self.alt_grid[i], float(self.diff[i])

    def to_dict(self) -> dict:
        test = self.test.to_dict()
        cv, lfd = (None, None)
        if self.test.multipliers.sum() > 0:
            cv, lfd = to_neyman_pearson(self.test)
            lfd = lfd.tolist()
        worst, worst_val = self.max_diff_point()
        return {
            "problem": self.problem_name,
            "adhoc_test": self.adhoc_name,
            "alpha": self.alpha,
            "verdict": self.verdict,
            "thresholds": self.thresholds.to_dict(),
            "seeds": {"fit": self.fit_seed, "verify": self.verify_seed},
            "n_draws": self.n_draws,
            "final_weights": {
                "points": [list(p.coords) for p in self.test.alt],
                "weights": self.test.weights.tolist(),
            },
            "final_test": {
                "null_components": test["null_components"],
                "multipliers": test["multipliers"],
                "critical_value": cv,
                "lfd_weights": lfd,
                "switching": test["switching"],
            },
            "summary": {
                "max_diff_pp": round(100 * worst_val, 3),
                "max_diff_at": list(worst.coords),
                "min_diff_pp": round(100 * float(np.min(self.diff)), 3),
                "max_abs_diff_pp": round(100 * float(np.max(np.abs(self.diff))), 3),
                "max_null_envelope": float(np.max(self.null_envelope)),
                "max_null_adhoc": float(np.max(self.null_adhoc)),
            },
            "violators": self.violators,
            "switching_check": self.switching_check,
            "history": self.history,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def summary_lines(self) -> list:
        d = self.to_dict()
        s = d["summary"]
        return [
            f"problem: {self.problem_name}",
            f"ad hoc test: {self.adhoc_name}",
            f"alpha: {self.alpha:.6g}",
            f"support sizes: null {len(self.test.null)}, alternative {len(self.test.alt)}",
            f"max envelope - ad hoc: {s['max_diff_pp']:.3f}pp at {tuple(s['max_diff_at'])}",
            f"min envelope - ad hoc: {s['min_diff_pp']:.3f}pp",
            f"max null rejection: envelope {s['max_null_envelope']:.6g}, ad hoc {s['max_null_adhoc']:.6g}",
            f"refinements: {len(self.history) - 1}",
            f"verdict: {self.verdict}",
        ]

    def write(self, out_dir) -> None:
        """Write ``report.json``, the CSV tables and ``summary.txt``."""
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.to_json(out / "report.json")
        (out / "heatmap.csv").write_text(heatmap_grid(self, "csv"))
        (out / "weights.csv").write_text(weights_csv(self))
        (out / "null_diagnostics.csv").write_text(null_csv(self))
        if self.outer_trace is not None:
            self.outer_trace.to_csv(out / "outer_trace.csv")
        (out / "summary.txt").write_text("\n".join(self.summary_lines()) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _theta_header(d: int) -> list:
    return [f"theta_{i + 1}" for i in range(d)]


def heatmap_grid(report: ApeReport, format: str = "csv"):
    """Envelope and ad hoc power on the fine alternative grid.

    ``format="csv"`` returns CSV text with columns ``theta_1..theta_d,
    power_envelope, power_adhoc, diff_pp``; ``format="json"`` returns a list
    of row dicts with the same keys.
    """
    d = report.alt_grid[0].dim
    keys = _theta_header(d) + ["power_envelope", "power_adhoc", "diff_pp"]
    rows = []
    for p, pe, pa, dp in zip(report.alt_grid, report.power_envelope, report.power_adhoc, report.diff_pp):
        rows.append([float(c) for c in p.coords] + [float(pe), float(pa), float(dp)])
    if format == "json":
        return [dict(zip(keys, r)) for r in rows]
    if format != "csv":
        raise ValueError("format must be 'csv' or 'json'")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(v) for v in r[:-1]] + [f"{r[-1]:.3f}"])
    return buf.getvalue()


def weights_csv(report: ApeReport) -> str:
    d = report.test.alt[0].dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_theta_header(d) + ["weight"])
    for p, wt in zip(report.test.alt, report.test.weights):
        w.writerow([_fmt(c) for c in p.coords] + [_fmt(wt)])
    return buf.getvalue()


def null_csv(report: ApeReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["component", "rejection_envelope", "rejection_adhoc"])
    for c, pe, pa in zip(report.null_grid, report.null_envelope, report.null_adhoc):
        w.writerow([c.describe(), _fmt(pe), _fmt(pa)])
    return buf.getvalue()


def wap_comparison(report: ApeReport, weights=None, points=None):
    """WAP of the envelope test and of the ad hoc test under ``weights``.

    Defaults to the report's final weights over its alternative support.
    Uses the verify bank.
    """
    points = list(report.test.alt) if points is None else [as_point(p) for p in points]
    w = report.test.weights if weights is None else np.asarray(weights, dtype=np.float64)
    w = check_weights(w, len(points))
    keep = np.flatnonzero(w > 0)
    src = [PointMass(points[j]) for j in keep]
    env = rejection_rates(report.test, src, report.verify_bank, report.problem)
    adh = rejection_rates(report.ad_hoc, src, report.verify_bank, report.problem)
    return float(w[keep] @ env), float(w[keep] @ adh)


def build_ape(
    problem,
    ad_hoc,
    init_null,
    init_alt,
    thresholds: ThresholdConfig,
    banks,
    alpha: float,
    *,
    loops: LoopConfig | None = None,
    init_weights=None,
    switching=None,
    switching_points=None,
) -> ApeReport:
    """Fit an approximate power envelope for ``ad_hoc`` and classify it.

    Parameters
    ----------
    problem : TestingProblem
    ad_hoc : AdHocTest or callable
    init_null : sequence of NullComponent
    init_alt : AlternativeSupport or sequence of points
    thresholds : ThresholdConfig
    banks : (DrawBank, DrawBank)
        Fit bank for the loops, verify bank for every reported surface.
        Their seeds must differ.
    alpha : float
    loops : LoopConfig, optional
    init_weights : array_like, optional
        Starting weights; uniform by default.
    switching : SwitchingRule, optional
    switching_points : sequence, optional
        Points at which to measure the switching probability (should stay
        below 0.01).

    Returns
    -------
    ApeReport
    """
    fit_bank, verify_bank = banks
    if fit_bank.seed == verify_bank.seed:
        raise ValueError("fit and verify banks must use different seeds")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    loops = loops or LoopConfig()
    if not isinstance(ad_hoc, AdHocTest):
        ad_hoc = AdHocTest(ad_hoc)
    eps = thresholds.epsilon
    null = [as_component(c) for c in init_null]
    alt = list(init_alt if isinstance(init_alt, AlternativeSupport) else AlternativeSupport(init_alt))
    w = uniform_weights(len(alt)) if init_weights is None else check_weights(init_weights, len(alt))
    lam = None

    switch_diag = None
    if switching is not None and switching_points:
        switch_diag = switching.check(problem, verify_bank, switching_points)
        if not switch_diag["ok"]:
            log.warning("switching probability %.4f exceeds %.2f", switch_diag["max"], switch_diag["threshold"])

    fine_null = thresholds.fine_null_grid
    fine_alt = thresholds.fine_alt_grid
    fine_alt_src = [PointMass(p) for p in fine_alt]
    adhoc_null = rejection_rates(ad_hoc, fine_null, verify_bank, problem)
    adhoc_alt = rejection_rates(ad_hoc, fine_alt_src, verify_bank, problem)

    history = []
    violators = []
    refinements = 0
    while True:
        ev = loop_evaluator(problem, fit_bank, null, alt, switching)
        trace = None
        for rnd in range(loops.max_rounds):
            test, w, trace = run_outer(
                ad_hoc,
                w,
                null,
                alt,
                fit_bank,
                problem,
                alpha,
                loops.outer_schedule,
                loops.n_outer,
                switching=switching,
                inner_iter=loops.n_inner if lam is None else (loops.warm_inner or loops.n_inner),
                warm_inner=loops.warm_inner,
                inner_schedule=loops.inner_schedule,
                init_multipliers=lam,
                normalize=loops.normalize,
                select=loops.outer_select,
                evaluator=ev,
                inner_kwargs={"selection": loops.selection, "dual_stride": loops.dual_stride},
            )
            lam = test.multipliers
            rates = ev.rates(lam)
            fit_sizes = rates[: len(null)]
            gamma = rates[len(null) :] - ev.adhoc_rates(ad_hoc)[len(null) :]
            step1_ok = bool(np.all(fit_sizes <= alpha + eps) and np.all(gamma >= -eps))
            if step1_ok:
                break
            log.info("outer round %d: fit-bank checks not met yet (max size %.4f, min gap %.4f)",
                     rnd + 1, fit_sizes.max(), gamma.min())
        del ev

        env_null = rejection_rates(test, fine_null, verify_bank, problem)
        env_alt = rejection_rates(test, fine_alt_src, verify_bank, problem)
        diff = env_alt - adhoc_alt
        entry = {
            "round": refinements,
            "n_null": len(null),
            "n_alt": len(alt),
            "fit_checks_met": step1_ok,
            "fit_max_size": float(np.max(fit_sizes)),
            "fit_min_gap": float(np.min(gamma)),
            "best_score": float(trace.best[-1]),
            "max_null_rejection": float(np.max(env_null)),
            "min_diff": float(np.min(diff)),
            "max_diff": float(np.max(diff)),
            "added_null": [],
            "added_alt": [],
        }
        history.append(entry)

        null_bad = _pick_violators(fine_null, env_null - alpha, eps, thresholds.max_added)
        alt_bad = [] if null_bad else _pick_violators(fine_alt, -diff, eps, thresholds.max_added)
        if not null_bad and not alt_bad:
            verdict = classify(diff, env_null, alpha, eps, thresholds.dominance_epsilon)
            break
        if refinements >= thresholds.max_refinements:
            verdict = INCONCLUSIVE
            violators = [{"kind": "size", "point": c.describe()} for c in null_bad]
            violators += [{"kind": "power", "point": list(p.coords)} for p in alt_bad]
            log.warning("refinement budget exhausted with %d violators", len(violators))
            break
        refinements += 1
        if null_bad:
            known = {c.describe() for c in null}
            added = [c for c in null_bad if c.describe() not in known]
            null = null + added
            lam = np.concatenate([lam, np.zeros(len(added))])
            entry["added_null"] = [c.describe() for c in added]
        else:
            added = [p for p in alt_bad if p not in alt]
            alt = alt + added
            w = np.concatenate([w, np.zeros(len(added))])
            entry["added_alt"] = [list(p.coords) for p in added]
        if not added:
            # violators already in the supports: more points cannot help
            verdict = INCONCLUSIVE
            violators = [{"kind": "persistent", "point": str(x)} for x in (null_bad or alt_bad)]
            break

    return ApeReport(
        problem_name=problem.name,
        alpha=alpha,
        verdict=verdict,
        thresholds=thresholds,
        test=test,
        alt_grid=list(fine_alt),
        power_envelope=env_alt,
        power_adhoc=adhoc_alt,
        null_grid=list(fine_null),
        null_envelope=env_null,
        null_adhoc=adhoc_null,
        history=history,
        outer_trace=trace,
        inner_sizes=fit_sizes,
        violators=violators,
        switching_check=switch_diag,
        adhoc_name=ad_hoc.name,
        fit_seed=fit_bank.seed,
        verify_seed=verify_bank.seed,
        n_draws=fit_bank.n_draws,
        problem=problem,
        ad_hoc=ad_hoc,
        verify_bank=verify_bank,
    )
