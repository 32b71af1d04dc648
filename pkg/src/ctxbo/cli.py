"""Command-line entry points.

Subcommands:
    learn <config.json>                      run the learning pipeline
    compare <spec.json>                      paired controller comparison
    simulate <config.json> --z ... --theta ... --seed N   episode dump
    heatmap <model.json> --grid G            adaptation-strategy grids

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.  The environment variable CTXBO_OUTPUT_DIR overrides the
output directory from any config.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import (OUTPUT_DIR_ENV, load_comparison_spec, load_run_config)
from .errors import ConfigError, NumericalError
from . import pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxbo",
        description="Contextual black-box controller tuning and its "
                    "intersection MPC benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_learn = sub.add_parser("learn", help="run the learning pipeline")
    p_learn.add_argument("config", help="path to a run-config JSON document")

    p_cmp = sub.add_parser("compare", help="paired controller comparison")
    p_cmp.add_argument("spec", help="path to a comparison-spec JSON document")

    p_sim = sub.add_parser("simulate", help="dump one episode trajectory")
    p_sim.add_argument("config", help="run-config JSON (cavsim evaluator)")
    p_sim.add_argument("--z", type=float, nargs="+", required=True)
    p_sim.add_argument("--theta", type=float, nargs="+", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None, help="trajectory CSV path")

    p_map = sub.add_parser("heatmap", help="export adaptation-strategy grids")
    p_map.add_argument("model", help="solution-model JSON file")
    p_map.add_argument("--grid", type=int, default=51)
    p_map.add_argument("--out", default=None, help="output directory")
    return parser


def _cmd_learn(args) -> int:
    cfg = load_run_config(args.config)
    summary = pipeline.run_learn(cfg)
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def _cmd_compare(args) -> int:
    spec = load_comparison_spec(args.spec)
    result = pipeline.run_compare(spec)
    print(json.dumps(result, indent=1))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_run_config(args.config)
    if cfg.evaluator.kind != "cavsim":
        raise ConfigError("simulate needs a cavsim evaluator config")
    out = args.out or f"{cfg.output_dir}/trajectory_seed{args.seed}.csv"
    result = pipeline.run_simulate(cfg.evaluator.scenario, np.asarray(args.z),
                                   np.asarray(args.theta), args.seed, out)
    print(json.dumps(result, indent=1))
    return EXIT_OK


def _cmd_heatmap(args) -> int:
    out_dir = args.out or "runs/heatmap"
    result = pipeline.export_heatmap(args.model, out_dir, grid=args.grid)
    print(json.dumps(result, indent=1))
    return EXIT_OK


_COMMANDS = {
    "learn": _cmd_learn,
    "compare": _cmd_compare,
    "simulate": _cmd_simulate,
    "heatmap": _cmd_heatmap,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
