"""Command-line entry point: ``ccep-soz generate | run | report``.

Exit codes: 0 success, 1 validation error (bad config, bad data), 2 any
other failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .dataset import write_csv
from .errors import (
    CcepError,
    InvalidConfigError,
    IoFailureError,
    PipelineError,
    ValidationError,
)
from .experiment import RunConfig, configure_logging, run_experiment
from .metrics import aggregate, read_results_csv
from .synth import GenConfig, generate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

log = logging.getLogger("ccep_soz")


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc


def cmd_generate(args):
    data = _read_json(args.config)
    block = data.get("generator", data) if isinstance(data, dict) else data
    if not isinstance(block, dict):
        raise InvalidConfigError("generator config must be a JSON object")
    cohort = generate(GenConfig.from_dict(block))
    write_csv(cohort, args.out)
    log.info("wrote %d records to %s", len(cohort), args.out)
    return EXIT_OK


def cmd_run(args):
    cfg = RunConfig.load(args.config)
    pipe = {k: v for k, v in (("smoothing_m", args.smoothing_m), ("sat_threshold", args.sat_threshold),
                              ("flat_eps", args.flat_eps), ("smote_k", args.smote_k)) if v is not None}
    if pipe or args.seed is not None:
        cfg = replace(cfg, pipeline=replace(cfg.pipeline, **pipe),
                      seed=cfg.seed if args.seed is None else args.seed)
    out = run_experiment(cfg, data_path=args.data, out_dir=args.out_dir)
    sys.stdout.write(out.table.to_markdown())
    return EXIT_OK


def cmd_report(args):
    try:
        results = read_results_csv(args.results)
    except OSError as exc:
        raise IoFailureError(str(exc)) from exc
    table = aggregate(results)
    sys.stdout.write(table.to_markdown() if args.format == "md" else table.to_csv())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="ccep-soz",
        description="Seizure-onset-zone classification from CCEP recordings.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug-level logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic raw cohort CSV")
    g.add_argument("--config", required=True, help="JSON with a 'generator' block (or the block itself)")
    g.add_argument("--out", required=True, help="destination CSV")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run the full pipeline and write reports")
    r.add_argument("--config", required=True, help="run configuration JSON")
    r.add_argument("--data", default=None, help="raw cohort CSV (default: use the generator block)")
    r.add_argument("--out-dir", required=True, help="directory for results and reports")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--smoothing-m", type=float, default=None, help="target-encoding smoothing m")
    r.add_argument("--sat-threshold", type=float, default=None,
                   help="saturation threshold in uV (default: 4x the 95th percentile of |x|)")
    r.add_argument("--flat-eps", type=float, default=None, help="flatline variance threshold")
    r.add_argument("--smote-k", type=int, default=None, help="SMOTE neighbour count")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("report", help="aggregate a results.csv into the summary table")
    t.add_argument("--results", required=True, help="long-form results.csv")
    t.add_argument("--format", choices=("md", "csv"), default="md")
    t.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    configure_logging(level)
    try:
        return args.func(args)
    except PipelineError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION if exc.is_validation else EXIT_RUNTIME
    except ValidationError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_VALIDATION
    except CcepError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI must map every failure to an exit code
        log.error("unexpected %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
