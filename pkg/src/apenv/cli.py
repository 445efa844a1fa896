"""Command line front end: ``apenv analyze|inner|power``.

Exit codes: 0 effectively optimal (or success for ``inner``/``power``),
2 effectively dominated, 3 inconclusive, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .builder import DOMINATED, INCONCLUSIVE, OPTIMAL, build_ape
from .config import ConfigError, build_context, load_config, resolve_defaults, validate_config
from .inner import NpTest, _fmt, run_inner, to_neyman_pearson
from .montecarlo import rejection_rates
from .problem import PointMass, as_point
from .problems.configs import expand_grid
from .simplex import check_weights, uniform_weights

log = logging.getLogger("apenv")

EXIT_CODES = {OPTIMAL: 0, DOMINATED: 2, INCONCLUSIVE: 3}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apenv", description="Approximate power envelopes for ad hoc tests.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("analyze", "fit the envelope, run the size and dominance checks, write the report"),
        ("inner", "fit the WAP-maximizing test for fixed weights"),
        ("power", "power curve of one test on a grid"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", type=Path, help="JSON run configuration")
        s.add_argument("--out", type=Path, required=True, help="output directory")
        s.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        s.add_argument("--paper-defaults", default=None, metavar="NAME", help="start from a named published setting")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "power":
            s.add_argument("--test", choices=("adhoc", "envelope", "standard"), default=None)
            s.add_argument("--report", type=Path, default=None, help="report.json holding the envelope test")
    return p


def _load(args) -> dict:
    if args.config is None:
        if not args.paper_defaults:
            raise ConfigError("give --config, --paper-defaults, or both")
        cfg = resolve_defaults({}, args.paper_defaults)
        validate_config(cfg)
        return cfg
    cfg, _ = load_config(args.config, args.paper_defaults)
    return cfg


def cmd_analyze(cfg: dict, out: Path) -> int:
    ctx = build_context(cfg)
    report = build_ape(
        ctx.problem,
        ctx.ad_hoc,
        ctx.null,
        ctx.alt,
        ctx.thresholds,
        (ctx.fit_bank, ctx.verify_bank),
        ctx.alpha,
        loops=ctx.loops,
        init_weights=ctx.init_weights,
        switching=ctx.switching,
        switching_points=ctx.switching_points,
    )
    report.write(out)
    extra = {"config": cfg, "seed_scores": {str(k): v for k, v in ctx.seed_scores.items()}}
    (out / "run_config.json").write_text(json.dumps(extra, indent=2) + "\n")
    print(f"verdict: {report.verdict}")
    return EXIT_CODES[report.verdict]


def cmd_inner(cfg: dict, out: Path) -> int:
    ctx = build_context(cfg)
    spec = cfg.get("inner") or {}
    w = spec.get("weights")
    w = uniform_weights(len(ctx.alt)) if w is None else check_weights(np.asarray(w, dtype=np.float64), len(ctx.alt))
    n_iter = int(spec.get("n_iter", ctx.loops.n_inner))
    test, trace = run_inner(
        w,
        ctx.null,
        ctx.alt,
        ctx.fit_bank,
        ctx.problem,
        ctx.alpha,
        ctx.loops.inner_schedule,
        n_iter,
        switching=ctx.switching,
        selection=ctx.loops.selection,
    )
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "dual_trace.csv")
    null_sizes = rejection_rates(test, ctx.null, ctx.verify_bank, ctx.problem)
    fine_sizes = rejection_rates(test, ctx.fine_null, ctx.verify_bank, ctx.problem)
    desc = test.to_dict()
    desc["null_size_verify"] = null_sizes.tolist()
    desc["max_fine_null_size"] = float(fine_sizes.max())
    desc["best_iterate"] = trace.best_index
    (out / "inner_test.json").write_text(json.dumps(desc, indent=2) + "\n")
    with open(out / "null_sizes.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["component", "rejection_envelope"])
        for c, v in zip(ctx.fine_null, fine_sizes):
            wr.writerow([c.describe(), _fmt(v)])
    if test.multipliers.sum() > 0:
        cv, _ = to_neyman_pearson(test)
        print(f"critical value: {cv:.6g}")
    print(f"max null rejection: {fine_sizes.max():.6g}")
    return 0


def cmd_power(cfg: dict, out: Path, which: str | None, report_path: Path | None) -> int:
    ctx = build_context(cfg)
    spec = cfg.get("power") or {}
    which = which or spec.get("test", "adhoc")
    grid = [as_point(p) for p in expand_grid(spec["grid"])] if "grid" in spec else list(ctx.fine_alt)
    if which == "adhoc":
        test = ctx.ad_hoc
    elif which == "standard":
        test = ctx.standard
    elif which == "envelope":
        path = report_path or (Path(spec["report"]) if spec.get("report") else None)
        if path is None or not Path(path).exists():
            raise ConfigError("the envelope curve needs a saved report.json (--report or power.report)")
        test = _envelope_from_report(Path(path), ctx)
    else:
        raise ConfigError(f"unknown test {which!r}")
    power = rejection_rates(test, [PointMass(p) for p in grid], ctx.verify_bank, ctx.problem)
    out.mkdir(parents=True, exist_ok=True)
    d = grid[0].dim
    with open(out / "power.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"theta_{i + 1}" for i in range(d)] + ["power"])
        for p, v in zip(grid, power):
            wr.writerow([_fmt(c) for c in p.coords] + [_fmt(v)])
    print(f"wrote {len(grid)} power values for the {which} test")
    return 0


def _envelope_from_report(path: Path, ctx) -> NpTest:
    rep = json.loads(path.read_text())
    ft, fw = rep["final_test"], rep["final_weights"]
    spec = {
        "alpha": rep["alpha"],
        "null_components": ft["null_components"],
        "multipliers": ft["multipliers"],
        "alt_points": fw["points"],
        "weights": fw["weights"],
    }
    return NpTest.from_dict(spec, switching=ctx.switching if ft.get("switching") else None)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            _kernels.set_threads(args.threads)
        cfg = _load(args)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.out)
        if args.command == "inner":
            return cmd_inner(cfg, args.out)
        return cmd_power(cfg, args.out, args.test, args.report)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
