"""Benchmark command line.

Subcommands: run (one experiment sweep to CSV), timing (per-iteration
wall times), summarize (aggregate a results CSV), validate-config and
validate-output (schema checks).  Exit codes: 0 success, 2 invalid
configuration or input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .configio import ConfigFileError, ExperimentSettings, RunConfig, load_config
from .experiments import (
    EXPERIMENTS,
    n_workers,
    parse_scheme,
    read_results,
    run_experiment,
    run_timing,
    summarize,
    validate_output,
    write_results,
    write_summary,
    write_timing,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_run_config(args) -> RunConfig:
    rc = load_config(args.config) if args.config else RunConfig()
    exp = rc.experiment
    if getattr(args, "trials", None) is not None:
        exp = replace(exp, trials=args.trials)
    if getattr(args, "seed", None) is not None:
        exp = replace(exp, seed=args.seed)
    if getattr(args, "schemes", None):
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        for s in schemes:
            parse_scheme(s)
        exp = replace(exp, schemes=schemes)
    return RunConfig(rc.system, rc.simhacl, rc.meta, exp)


def _cmd_run(args) -> int:
    try:
        rc = _load_run_config(args)
        if args.experiment == "bits":
            for s in rc.experiment.schemes:
                if parse_scheme(s)[1] is not None:
                    raise ValueError(
                        f"scheme {s!r} fixes a resolution; the bits sweep already sweeps it"
                    )
    except (ConfigFileError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or f"results/{args.experiment}.csv"
    try:
        rows = run_experiment(args.experiment, rc)
        write_results(out, rows, rc)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(
        f"{args.experiment}: {len(rows)} rows "
        f"({rc.experiment.trials} trials x {len(rc.experiment.schemes)} schemes, "
        f"{n_workers()} worker(s)) -> {out}"
    )
    return EXIT_OK


def _cmd_timing(args) -> int:
    try:
        rc = _load_run_config(args)
        layer_counts = tuple(int(v) for v in args.layers.split(","))
    except (ConfigFileError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or "results/timing.csv"
    try:
        rows = run_timing(rc, layer_counts=layer_counts, reps=args.reps, iters=args.iters)
        write_timing(out, rows, rc)
    except Exception as exc:
        print(f"timing failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"timing: {len(rows)} rows -> {out}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        rc = _load_run_config(args)
        rows = read_results(args.input)
    except (ConfigFileError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = summarize(rows)
        if args.out:
            write_summary(args.out, table, rc)
            print(f"summary: {len(table)} groups -> {args.out}")
        else:
            for exp, param, value, scheme, n, mean, ci in table:
                print(f"{exp} {param}={value} {scheme}: {mean:.4f} +- {ci:.4f} (n={n})")
    except Exception as exc:
        print(f"summarize failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_validate_config(args) -> int:
    try:
        load_config(args.config)
    except ConfigFileError as exc:
        for problem in exc.problems:
            print(f"config problem: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.config}: ok")
    return EXIT_OK


def _cmd_validate_output(args) -> int:
    problems = validate_output(args.input)
    if problems:
        for problem in problems:
            print(f"output problem: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.input}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simsec-bench",
        description="secrecy-rate benchmarks for layered-metasurface beamforming",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment sweep and write a CSV")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--config", help="INI run configuration")
    run.add_argument("--schemes", help="comma-separated scheme list")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output CSV path")
    run.set_defaults(fn=_cmd_run)

    timing = sub.add_parser("timing", help="measure per-iteration cost vs depth")
    timing.add_argument("--config")
    timing.add_argument("--layers", default="2,4,6,8")
    timing.add_argument("--reps", type=int, default=5)
    timing.add_argument("--iters", type=int, default=30)
    timing.add_argument("--seed", type=int)
    timing.add_argument("--out")
    timing.set_defaults(fn=_cmd_timing)

    summ = sub.add_parser("summarize", help="aggregate a results CSV")
    summ.add_argument("--input", required=True)
    summ.add_argument("--config")
    summ.add_argument("--out")
    summ.set_defaults(fn=_cmd_summarize)

    vc = sub.add_parser("validate-config", help="check an INI configuration")
    vc.add_argument("--config", required=True)
    vc.set_defaults(fn=_cmd_validate_config)

    vo = sub.add_parser("validate-output", help="check a CSV written by this tool")
    vo.add_argument("--input", required=True)
    vo.set_defaults(fn=_cmd_validate_output)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
