"""Published run configurations for the built-in problems, plus desk-scale variants.

Each configuration is a plain JSON-compatible dict in the same schema the
command line accepts (see ``docs/FORMATS.md``). Grids are stored compactly
and expanded by :func:`expand_grid`.
"""

from __future__ import annotations

import copy
import math

import numpy as np

__all__ = ["CONFIG_NAMES", "paper_configs", "expand_grid", "expand_components", "thin"]


def _r(lo, hi, step):
    """Inclusive arithmetic range with tidy decimals."""
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


def _nonzero(xs):
    return [x for x in xs if x != 0]


_IV_OMEGA_LAMBDAS = [1, 5] + _r(10, 30, 5) + _r(40, 170, 10)
_IV_SIGMA_NULL_LAMBDAS = [1, 5, 10, 15, 20, 30, 40] + _r(50, 150, 20) + _r(175, 300, 25)
_IV_SIGMA_TAIL_LAMBDAS = _r(50, 150, 20) + _r(175, 300, 25)
_IV_FINE_NULL = {"product": [[0.0], _r(0, 150, 2)]}
_IV_FINE_ALT = {"b_over_sqrt_lambda": [{"b": _nonzero(_r(-3.5, 3.5, 0.5)), "lambda": [0.1] + _r(10, 170, 10)}]}

_IV_SIGMA_ALT = {
    "b_over_sqrt_lambda": [
        {"b": [-40, -30, -20, -10, -2.5, -1, 1, 6, 20, 30], "lambda": [1]},
        {"b": [-40, -30, -20, -10, -5, -1, 1, 5, 10, 20, 30], "lambda": [5]},
        {"b": [-40, -30, -20, -10, -6, -1, 1, 5, 10, 20, 30], "lambda": [10]},
        {"b": [-40, -30, -20, -10, -7.5, -2, 2, 10, 20, 30], "lambda": [15]},
        {"b": [-30, -10, -5, -3, 3, 7, 10, 20, 40], "lambda": [20]},
        {"b": [-3, -1, 2, 4, 6, 8], "lambda": [30]},
        {"b": [-3, 2, 4, 6, 8], "lambda": [40]},
        {"b": [-3, 2, 4], "lambda": _IV_SIGMA_TAIL_LAMBDAS},
    ]
}

_BOUNDARY_BASES = [[0.0, 0.00001], [0.0, 0.04], [1.99, 2.01]] + [[a, a + 0.5] for a in _r(0, 12, 0.5)]

_COMMON = {
    "alpha": 0.05,
    "thresholds": {"epsilon": 0.005, "dominance_epsilon": None, "max_refinements": 10, "max_added": 5},
    "loops": {
        "n_outer": 1000,
        "n_inner": 1000,
        "warm_inner": None,
        "inner_schedule": {"kind": "adaptive"},
        "outer_schedule": {"kind": "adaptive"},
        "normalize": "vector",
        "max_rounds": 1,
        "selection": "smoothed",
        "outer_select": "last",
        "dual_stride": 1,
    },
    "init_weights": None,
    "switching": None,
}

_PAPER = {
    "gaussian-mean": {
        "problem": {"name": "gaussian-mean", "beta0": 0.0},
        "seeds": {"fit": 1, "verify": 2, "cv": 0, "fit_candidates": None},
        "draws": {"fit": 300000, "verify": 300000, "cv": 1000000},
        "bank": {"standardize": True, "symmetrize": True},
        "null_support": [[0.0]],
        "alt_support": [[-1.0], [1.0]],
        "init_weights": [0.9, 0.1],
        "fine_null_grid": [[0.0]],
        "fine_alt_grid": {"product": [_nonzero(_r(-3.5, 3.5, 0.5))]},
    },
    "boundary-iici": {
        "problem": {"name": "boundary-iici", "rho": 0.7, "beta0": 0.0},
        "seeds": {"fit": 1, "verify": 2, "cv": 0, "fit_candidates": None},
        "draws": {"fit": 300000, "verify": 300000, "cv": 1000000},
        "bank": {"standardize": True, "symmetrize": True},
        "null_support": [{"kind": "base", "start": [0.0, a], "stop": [0.0, b]} for a, b in _BOUNDARY_BASES],
        "alt_support": {"product": [[-3, -2, -1, 1, 2, 3], _r(0, 8, 0.5)]},
        "fine_null_grid": {"product": [[0.0], _r(0, 7, 0.1)]},
        "fine_alt_grid": {"product": [_nonzero(_r(-3.5, 3.5, 0.5)), _r(0, 8, 0.5)]},
        "switching": {"switch_point": 6.0, "safe_level": 3.5},
        "thresholds": {"dominance_epsilon": 0.001},
        "loops": {"inner_schedule": {"kind": "constant", "step": 0.01}},
    },
    "iv-fixed-omega": {
        "problem": {"name": "linear-iv", "k": 5, "design": "fixed-omega", "r": 0.5, "beta0": 0.0},
        "seeds": {"fit": 1, "verify": 101, "cv": 0, "fit_candidates": list(range(1, 21))},
        "draws": {"fit": 300000, "verify": 300000, "cv": 1000000},
        "bank": {"standardize": True, "symmetrize": False},
        "null_support": {"product": [[0.0], _IV_OMEGA_LAMBDAS]},
        "alt_support": {"b_over_sqrt_lambda": [{"b": [-4, -3, -2, 2, 3, 4], "lambda": _IV_OMEGA_LAMBDAS}]},
        "fine_null_grid": _IV_FINE_NULL,
        "fine_alt_grid": _IV_FINE_ALT,
        "switching": {"switch_point": 160.0, "safe_level": 75.0},
    },
    "iv-fixed-sigma": {
        "problem": {"name": "linear-iv", "k": 10, "design": "fixed-sigma", "r": 0.5, "beta0": 0.0},
        "seeds": {"fit": 1, "verify": 101, "cv": 0, "fit_candidates": list(range(1, 21))},
        "draws": {"fit": 300000, "verify": 300000, "cv": 1000000},
        "bank": {"standardize": True, "symmetrize": False},
        "null_support": {"product": [[0.0], _IV_SIGMA_NULL_LAMBDAS]},
        "alt_support": _IV_SIGMA_ALT,
        "fine_null_grid": _IV_FINE_NULL,
        "fine_alt_grid": _IV_FINE_ALT,
        "switching": {"switch_point": 320.0, "safe_level": 160.0},
    },
}

# Desk-scale variants: fewer draws, shorter loops, supports thinned in the
# nuisance direction. Tolerances follow the scaled acceptance targets.
_DESK = {
    "gaussian-mean-desk": (
        "gaussian-mean",
        {"loops": {"n_outer": 150, "warm_inner": 200}},
    ),
    "boundary-iici-desk": (
        "boundary-iici",
        {
            "draws": {"fit": 50000, "verify": 50000},
            "loops": {"n_outer": 1000, "warm_inner": 20, "dual_stride": 5},
            "thresholds": {"max_refinements": 3},
        },
    ),
    "iv-fixed-omega-desk": (
        "iv-fixed-omega",
        {
            "draws": {"fit": 50000, "verify": 50000},
            "loops": {"n_outer": 150, "warm_inner": 100},
            "thresholds": {"max_refinements": 3},
            "thin": 2,
        },
    ),
    "iv-fixed-sigma-desk": (
        "iv-fixed-sigma",
        {
            "draws": {"fit": 50000, "verify": 50000},
            "loops": {"n_outer": 150, "warm_inner": 100},
            "thresholds": {"max_refinements": 3},
            "thin": 2,
        },
    ),
}

CONFIG_NAMES = tuple(_PAPER) + tuple(_DESK)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def paper_configs(name: str) -> dict:
    """Full run configuration for a published or desk-scale setting.

    Parameters
    ----------
    name : str
        One of ``gaussian-mean``, ``boundary-iici``, ``iv-fixed-omega``,
        ``iv-fixed-sigma`` or the same with a ``-desk`` suffix.

    Returns
    -------
    dict
        JSON-compatible configuration; grids are compact specs.
    """
    if name in _PAPER:
        return _merge(_COMMON, _PAPER[name])
    if name in _DESK:
        parent, over = _DESK[name]
        cfg = _merge(paper_configs(parent), over)
        step = cfg.pop("thin", None)
        if step:
            cfg["null_support"] = thin(cfg["null_support"], step)
            cfg["alt_support"] = thin(cfg["alt_support"], step)
        return cfg
    raise ValueError(f"unknown configuration {name!r}; choose one of {', '.join(CONFIG_NAMES)}")


def thin(grid_spec, step: int):
    """Keep every ``step``-th nuisance value (last coordinate) of a grid.

    Values are sorted over the whole grid and the first, third, ... are
    kept, so every slice keeps only points whose nuisance value survives.
    """
    pts = expand_grid(grid_spec)
    values = sorted({p[-1] for p in pts})
    keep = set(values[::step])
    return [p for p in pts if p[-1] in keep]


def expand_grid(spec) -> list:
    """Expand a compact grid spec into a list of coordinate lists.

    Accepted forms:

    * a list of coordinate lists (or bare numbers for 1-d problems);
    * ``{"product": [axis_1, axis_2, ...]}``: Cartesian product;
    * ``{"b_over_sqrt_lambda": [{"b": [...], "lambda": [...]}, ...]}``:
      union of slices of points ``(b / sqrt(lambda), lambda)``.
    """
    if isinstance(spec, dict):
        if "product" in spec:
            axes = [list(map(float, a)) for a in spec["product"]]
            mesh = np.meshgrid(*axes, indexing="ij")
            return [list(map(float, row)) for row in np.stack([m.ravel() for m in mesh], axis=1)]
        if "b_over_sqrt_lambda" in spec:
            out = []
            for sl in spec["b_over_sqrt_lambda"]:
                for lam in sl["lambda"]:
                    for b in sl["b"]:
                        out.append([float(b) / math.sqrt(float(lam)), float(lam)])
            return out
        raise ValueError(f"unrecognized grid spec keys: {sorted(spec)}")
    out = []
    for p in spec:
        if isinstance(p, dict):
            raise ValueError("use expand_components for null component specs")
        out.append([float(p)] if np.isscalar(p) else [float(c) for c in p])
    return out


def expand_components(spec) -> list:
    """Like :func:`expand_grid` but entries may be component dicts."""
    if isinstance(spec, dict):
        return expand_grid(spec)
    out = []
    for c in spec:
        if isinstance(c, dict):
            out.append(copy.deepcopy(c))
        else:
            out.append([float(c)] if np.isscalar(c) else [float(x) for x in c])
    return out
