"""Command-line driver: ``python -m spba <command> ...``.

Exit codes: 0 when every embedded check passes, 1 when a check fails,
2 for usage, config or IO errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    SWEEP_COLUMNS,
    SWEEP_PARAMS,
    TABLE_COLUMNS,
    obsv_table,
    singularity_sweep,
    write_csv,
)
from .errors import SpbaError, Unsupported
from .experiments import DEFAULT_MONTE_CARLO, EstimatorConfig, monte_carlo
from .simulation import PRESETS, generate_scenario, load_config, scenarios_from_config
from .sp_geometry import DEFAULT_DELTA, derivative_bound

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2
FEJ_LEAKAGE_MAX = 1e-8
CP_NORM_MIN = 1e5
EXCLUSION_MIN = 0.9


def _emit_csv(rows, columns, out):
    write_csv(rows, columns, sys.stdout if out in (None, "-") else out)


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _scenarios(args, default_cfg=None):
    if args.preset:
        return [generate_scenario(name) for name in args.preset]
    if args.config:
        return scenarios_from_config(load_config(args.config))
    if default_cfg is not None:
        return scenarios_from_config(default_cfg)
    return [generate_scenario(name) for name in PRESETS]


def cmd_obsv_table(args) -> int:
    rows = obsv_table(_scenarios(args), states=args.states, seed=args.seed)
    _emit_csv(rows, TABLE_COLUMNS, args.out)
    failed = [r.scenario for r in rows if not r.passed]
    if failed:
        print(f"observability checks failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _sweep_ok(rows) -> bool:
    bound = derivative_bound(DEFAULT_DELTA) + 1.0
    for row in rows:
        value = float(row["value"])
        if row["quantity"] == "OA":
            norm = float(row["jacobian_norm"])
            if row["param"] == "cp" and value == 1e-6 and norm < CP_NORM_MIN:
                return False
            if row["param"] == "sp" and norm > bound:
                return False
        else:
            if row["nullity"] != row["predicted_nullity"]:
                return False
            if row["param"] == "pluecker" and value == 0.0 and float(row["translation_exclusion"]) < EXCLUSION_MIN:
                return False
    return True


def cmd_singularity_sweep(args) -> int:
    rows = singularity_sweep(args.param, seed=args.seed)
    _emit_csv(rows, SWEEP_COLUMNS, args.out)
    return EXIT_OK if _sweep_ok(rows) else EXIT_CHECK_FAILED


def cmd_ba_montecarlo(args) -> int:
    if args.param == "cpp":
        raise Unsupported("bundle adjustment is only implemented for the stereographic parameterization")
    cfg = load_config(args.config) if args.config else DEFAULT_MONTE_CARLO
    scenarios = _scenarios(args, cfg)
    est = EstimatorConfig.from_dict({**cfg.get("estimator", {}), "fej": args.fej == "on"})
    reports = [monte_carlo(s, est, args.runs, seed=args.seed, jobs=args.jobs) for s in scenarios]
    reports.sort(key=lambda r: r["scenario"])
    _emit_json({"schema_version": reports[0]["schema_version"], "command": "ba-montecarlo",
                "reports": reports}, args.out)
    if est.fej:
        leak = [r["aggregate"]["median_leakage"] for r in reports]
        if any(v is None or not np.isfinite(v) or v > FEJ_LEAKAGE_MAX for v in leak):
            print("median nullspace leakage exceeds the FEJ bound", file=sys.stderr)
            return EXIT_CHECK_FAILED
    return EXIT_OK


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spba", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("obsv-table", help="unobservable dimension of every preset")
    p.add_argument("--config", help="scenario config (JSON, schema_version 1)")
    p.add_argument("--preset", action="append", choices=sorted(PRESETS), help="restrict to presets")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=_positive_int, default=5, help="random evaluation states per preset")
    p.set_defaults(func=cmd_obsv_table)

    p = sub.add_parser("singularity-sweep", help="Jacobian norms and nullities near degenerate geometry")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_singularity_sweep)

    p = sub.add_parser("ba-montecarlo", help="seeded sliding-window estimator runs")
    p.add_argument("--config", help="Monte-Carlo config (JSON, schema_version 1)")
    p.add_argument("--preset", action="append", choices=sorted(PRESETS), help="override the config scenarios")
    p.add_argument("--out", help="output JSON (default: stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=_positive_int, default=50)
    p.add_argument("--fej", choices=("on", "off"), default="on")
    p.add_argument("--param", choices=("sp", "cpp"), default="sp")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_ba_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpbaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
