#!/usr/bin/env python3
"""Run the benchmark sweeps and write results plus summaries.

Equivalent to calling `simsec-bench run` once per experiment followed
by `simsec-bench summarize`, kept as one script so a full benchmark
campaign is a single command:

    python scripts/run_benchmarks.py --config configs/default.ini --out-dir results
"""

import argparse
import sys
import time

from simsec.cli import _load_run_config  # shares CLI override handling
from simsec.experiments import (
    EXPERIMENTS,
    run_experiment,
    summarize,
    write_results,
    write_summary,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--experiments", default=",".join(EXPERIMENTS),
                        help="comma-separated subset of: " + ", ".join(EXPERIMENTS))
    parser.add_argument("--schemes", help="comma-separated scheme list override")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args(argv)

    rc = _load_run_config(args)
    chosen = [e.strip() for e in args.experiments.split(",") if e.strip()]
    unknown = [e for e in chosen if e not in EXPERIMENTS]
    if unknown:
        parser.error(f"unknown experiments: {unknown}")

    for experiment in chosen:
        start = time.time()
        rows = run_experiment(experiment, rc)
        write_results(f"{args.out_dir}/{experiment}.csv", rows, rc)
        write_summary(f"{args.out_dir}/{experiment}_summary.csv", summarize(rows), rc)
        print(f"{experiment}: {len(rows)} rows in {time.time() - start:.1f}s "
              f"-> {args.out_dir}/{experiment}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
