"""Run configuration: JSON parsing, validation and object construction."""

from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .builder import LoopConfig, ThresholdConfig
from .montecarlo import DrawBank, build_bank, tune_seed
from .problem import AlternativeSupport, as_point, component_from_dict
from .problems import make_adhoc, make_problem, make_standard
from .problems.clr import clr_critical_values
from .problems.configs import expand_components, expand_grid, paper_configs
from .problems.linear_iv import LinearIvProblem
from .schedules import schedule_from_dict

__all__ = ["ConfigError", "RunContext", "load_config", "validate_config", "build_context"]

log = logging.getLogger(__name__)

_TOP_KEYS = {
    "problem",
    "alpha",
    "seeds",
    "draws",
    "bank",
    "loops",
    "thresholds",
    "null_support",
    "alt_support",
    "init_weights",
    "fine_null_grid",
    "fine_alt_grid",
    "switching",
    "inner",
    "power",
    "paper-defaults",
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based line of the offending key when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


def _line_of(text: str | None, path: tuple) -> int | None:
    """Best-effort line number of the key at ``path`` inside ``text``."""
    if not text or not path:
        return None
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"' + re.escape(str(key)) + r'"\s*:').search(text, pos)
        if m is None:
            break
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def load_config(path, paper_defaults: str | None = None) -> tuple[dict, str]:
    """Read a JSON config and expand ``paper-defaults``; returns ``(config, raw_text)``."""
    with open(path) as fh:
        raw = fh.read()
    try:
        user = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err.msg}", err.lineno, str(path)) from None
    if not isinstance(user, dict):
        raise ConfigError("top level must be a JSON object", 1, str(path))
    cfg = resolve_defaults(user, paper_defaults)
    validate_config(cfg, raw, str(path))
    return cfg, raw


def resolve_defaults(user: dict, paper_defaults: str | None = None) -> dict:
    """Merge a user config over a named published configuration when requested.

    ``paper-defaults`` may be ``true`` (use the problem name, or the
    ``iv-fixed-omega``/``iv-fixed-sigma`` setting for ``linear-iv``) or a
    configuration name.
    """
    name = paper_defaults
    flag = user.get("paper-defaults")
    if name is None and flag:
        if isinstance(flag, str):
            name = flag
        else:
            prob = user.get("problem", {})
            name = prob.get("name")
            if name == "linear-iv":
                name = "iv-fixed-sigma" if prob.get("design") == "fixed-sigma" else "iv-fixed-omega"
    if not name:
        base = paper_configs("gaussian-mean")
        # without paper defaults only generic settings are inherited
        base = {k: base[k] for k in ("alpha", "loops", "thresholds", "bank", "seeds", "draws", "switching")}
        base["seeds"]["fit_candidates"] = None
        return _merge(base, {k: v for k, v in user.items() if k != "paper-defaults"})
    return _merge(paper_configs(name), {k: v for k, v in user.items() if k != "paper-defaults"})


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("problem",):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: dict, raw: str | None = None, source: str | None = None) -> None:
    """Raise :class:`ConfigError` on the first invalid entry."""

    def fail(msg, *path):
        raise ConfigError(msg, _line_of(raw, path), source)

    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        fail(f"unknown key(s): {', '.join(sorted(unknown))}", sorted(unknown)[0])
    if "problem" not in cfg or not isinstance(cfg["problem"], dict):
        fail("missing 'problem' object", "problem")
    try:
        problem = make_problem(cfg["problem"])
    except (TypeError, ValueError) as err:
        fail(str(err), "problem")
    alpha = cfg.get("alpha")
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        fail("alpha must be a number in (0, 1)", "alpha")
    seeds = cfg.get("seeds", {})
    for key in ("fit", "verify", "cv"):
        if not isinstance(seeds.get(key), int) or seeds[key] < 0:
            fail(f"seeds.{key} must be a nonnegative integer", "seeds", key)
    if seeds["fit"] == seeds["verify"]:
        fail("fit and verify seeds must differ (the verify bank must be independent)", "seeds", "verify")
    cands = seeds.get("fit_candidates")
    if cands is not None:
        if not isinstance(cands, list) or not cands or not all(isinstance(s, int) and s >= 0 for s in cands):
            fail("seeds.fit_candidates must be a nonempty list of nonnegative integers", "seeds", "fit_candidates")
        if seeds["verify"] in cands:
            fail("seeds.verify must not be one of the fit candidates", "seeds", "verify")
    draws = cfg.get("draws", {})
    for key in ("fit", "verify", "cv"):
        if not isinstance(draws.get(key), int) or draws[key] <= 0:
            fail(f"draws.{key} must be a positive integer", "draws", key)
    bank = cfg.get("bank", {})
    if bank.get("symmetrize") and (draws["fit"] % 2 or draws["verify"] % 2):
        fail("symmetrized banks need even draw counts", "draws")
    loops = cfg.get("loops", {})
    for key in ("n_outer", "n_inner", "max_rounds", "dual_stride"):
        if key in loops and (not isinstance(loops[key], int) or loops[key] < 1):
            fail(f"loops.{key} must be a positive integer", "loops", key)
    if loops.get("warm_inner") is not None and (not isinstance(loops["warm_inner"], int) or loops["warm_inner"] < 1):
        fail("loops.warm_inner must be a positive integer or null", "loops", "warm_inner")
    if loops.get("normalize", "vector") not in ("vector", "sign"):
        fail("loops.normalize must be 'vector' or 'sign'", "loops", "normalize")
    if loops.get("selection", "smoothed") not in ("smoothed", "direct", "last"):
        fail("loops.selection must be 'smoothed', 'direct' or 'last'", "loops", "selection")
    if loops.get("outer_select", "last") not in ("last", "dual", "gap"):
        fail("loops.outer_select must be 'last', 'dual' or 'gap'", "loops", "outer_select")
    for key, loop in (("inner_schedule", "inner"), ("outer_schedule", "outer")):
        try:
            schedule_from_dict(loops.get(key), loop)
        except (KeyError, TypeError, ValueError) as err:
            fail(f"loops.{key}: {err}", "loops", key)
    th = cfg.get("thresholds", {})
    if "epsilon" in th and not (isinstance(th["epsilon"], (int, float)) and th["epsilon"] > 0):
        fail("thresholds.epsilon must be positive", "thresholds", "epsilon")

    for key, kind in (
        ("null_support", "null"),
        ("alt_support", "alt"),
        ("fine_null_grid", "null"),
        ("fine_alt_grid", "alt"),
    ):
        if key not in cfg:
            fail(f"missing '{key}'", key)
        try:
            items = _components(cfg[key]) if kind == "null" else [as_point(p) for p in expand_grid(cfg[key])]
        except (KeyError, TypeError, ValueError) as err:
            fail(f"{key}: {err}", key)
        if not items:
            fail(f"{key} is empty", key)
        for it in items:
            pts = _component_points(it) if kind == "null" else [it]
            for p in pts:
                if p.dim != problem.dim_theta:
                    fail(f"{key}: point {p.describe()} has dimension {p.dim}, expected {problem.dim_theta}", key)
                if not np.all(np.isfinite(p.as_array())):
                    fail(f"{key}: non-finite point {p.describe()}", key)
                inside = problem.in_null(p) if kind == "null" else problem.in_alt(p)
                if not inside:
                    fail(f"{key}: point {p.describe()} is not in the {'null' if kind == 'null' else 'alternative'}", key)
        if kind == "alt" and len(set(items)) != len(items):
            fail(f"{key}: duplicate support point", key)
    w = cfg.get("init_weights")
    if w is not None:
        n_alt = len(expand_grid(cfg["alt_support"]))
        arr = np.asarray(w, dtype=np.float64)
        if arr.shape != (n_alt,) or np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
            fail(f"init_weights must be {n_alt} nonnegative numbers summing to 1", "init_weights")
    sw = cfg.get("switching")
    if sw is not None and not isinstance(sw.get("switch_point"), (int, float)):
        fail("switching.switch_point must be a number", "switching", "switch_point")


def _components(spec) -> list:
    out = []
    for c in expand_components(spec):
        if isinstance(c, dict):
            d = dict(c)
            d.setdefault("kind", "point")
            out.append(component_from_dict(d))
        else:
            out.append(component_from_dict({"kind": "point", "theta": c}))
    return out


def _component_points(c):
    if c.kind == "point":
        return [c.point]
    return [c.start, c.stop]


@dataclass
class RunContext:
    """Everything a command needs, built from a validated config."""

    config: dict
    problem: object
    alpha: float
    ad_hoc: object
    standard: object
    null: list
    alt: AlternativeSupport
    fine_null: list
    fine_alt: list
    fit_bank: DrawBank
    verify_bank: DrawBank
    switching: object
    switching_points: list
    thresholds: ThresholdConfig
    loops: LoopConfig
    init_weights: np.ndarray | None
    cv_table: object = None
    seed_scores: dict = field(default_factory=dict)


def build_context(cfg: dict) -> RunContext:
    """Construct problem, tests, banks and settings from a validated config."""
    problem = make_problem(cfg["problem"])
    alpha = float(cfg["alpha"])
    seeds, draws, bank = cfg["seeds"], cfg["draws"], cfg.get("bank", {})
    std, sym = bool(bank.get("standardize", True)), bool(bank.get("symmetrize", False))
    cv_table = None
    if isinstance(problem, LinearIvProblem):
        cv_table = clr_critical_values(problem.k, alpha, draws["cv"], seed=seeds["cv"])
    ad_hoc = make_adhoc(problem, alpha, cv_table)
    standard = make_standard(problem, alpha)
    null = _components(cfg["null_support"])
    alt = AlternativeSupport(expand_grid(cfg["alt_support"]))

    fit_seed = seeds["fit"]
    scores = {}
    if seeds.get("fit_candidates"):
        from .montecarlo import seed_deviations

        params = {"n_draws": draws["fit"], "standardize": std, "symmetrize": sym}
        scores = seed_deviations(seeds["fit_candidates"], ad_hoc, null, params, problem, alpha)
        fit_seed = tune_seed(seeds["fit_candidates"], ad_hoc, null, params, problem, alpha)
        log.info("tuned fit seed: %d", fit_seed)
    fit_bank = build_bank(fit_seed, draws["fit"], problem.dim_base, std, sym)
    verify_bank = build_bank(seeds["verify"], draws["verify"], problem.dim_base, std, sym)

    switching, sw_points = None, []
    sw = cfg.get("switching")
    if sw:
        from .problem import SwitchingRule

        switching = SwitchingRule(
            statistic=_switch_statistic(problem),
            switch_point=float(sw["switch_point"]),
            standard_test=standard,
            name="switching",
            safe_level=sw.get("safe_level"),
        )
        fine_null_pts = [p for c in _components(cfg["fine_null_grid"]) for p in _component_points(c)]
        if sw.get("safe_level") is not None:
            sw_points = [p for p in fine_null_pts if p.coords[-1] <= sw["safe_level"]]

    th = cfg.get("thresholds", {})
    thresholds = ThresholdConfig(
        epsilon=float(th.get("epsilon", 0.005)),
        fine_null_grid=_components(cfg["fine_null_grid"]),
        fine_alt_grid=expand_grid(cfg["fine_alt_grid"]),
        max_refinements=int(th.get("max_refinements", 10)),
        dominance_epsilon=th.get("dominance_epsilon"),
        max_added=int(th.get("max_added", 5)),
    )
    lp = cfg.get("loops", {})
    loops = LoopConfig(
        n_outer=int(lp.get("n_outer", 1000)),
        n_inner=int(lp.get("n_inner", 1000)),
        warm_inner=lp.get("warm_inner"),
        inner_schedule=schedule_from_dict(lp.get("inner_schedule"), "inner"),
        outer_schedule=schedule_from_dict(lp.get("outer_schedule"), "outer"),
        normalize=lp.get("normalize", "vector"),
        max_rounds=int(lp.get("max_rounds", 1)),
        selection=lp.get("selection", "smoothed"),
        outer_select=lp.get("outer_select", "last"),
        dual_stride=int(lp.get("dual_stride", 1)),
    )
    w = cfg.get("init_weights")
    return RunContext(
        config=cfg,
        problem=problem,
        alpha=alpha,
        ad_hoc=ad_hoc,
        standard=standard,
        null=null,
        alt=alt,
        fine_null=thresholds.fine_null_grid,
        fine_alt=thresholds.fine_alt_grid,
        fit_bank=fit_bank,
        verify_bank=verify_bank,
        switching=switching,
        switching_points=sw_points,
        thresholds=thresholds,
        loops=loops,
        init_weights=None if w is None else np.asarray(w, dtype=np.float64),
        cv_table=cv_table,
        seed_scores=scores,
    )


def _switch_statistic(problem):
    if isinstance(problem, LinearIvProblem):
        return lambda y: np.asarray(y)[:, 2]
    if problem.dim_y >= 2:
        return lambda y: np.asarray(y)[:, 1]
    return lambda y: np.abs(np.asarray(y)[:, 0])
