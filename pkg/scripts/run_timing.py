#!/usr/bin/env python3
"""Measure per-iteration optimizer cost against metasurface depth.

Writes the raw repetitions to CSV and prints the per-depth medians with
a least-squares linear fit, e.g.:

    python scripts/run_timing.py --layers 2,4,6,8 --reps 15
"""

import argparse
import sys

import numpy as np

from simsec.cli import _load_run_config
from simsec.experiments import run_timing, write_timing


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--layers", default="2,4,6,8")
    parser.add_argument("--reps", type=int, default=15)
    parser.add_argument("--iters", type=int, default=40)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", default="results/timing.csv")
    args = parser.parse_args(argv)

    rc = _load_run_config(args)
    layer_counts = tuple(int(v) for v in args.layers.split(","))
    rows = run_timing(rc, layer_counts=layer_counts, reps=args.reps, iters=args.iters)
    write_timing(args.out, rows, rc)

    schemes = sorted({r.scheme for r in rows})
    print(f"{'layers':>6} " + " ".join(f"{s + ' p50 [ms]':>18}" for s in schemes))
    medians = {s: [] for s in schemes}
    for m in layer_counts:
        cells = []
        for s in schemes:
            vals = [r.sec_per_iter for r in rows if r.scheme == s and r.layers == m]
            med = float(np.median(vals))
            medians[s].append(med)
            cells.append(f"{1e3 * med:>18.3f}")
        print(f"{m:>6} " + " ".join(cells))

    ms = np.asarray(layer_counts, dtype=float)
    design = np.vstack([ms, np.ones_like(ms)]).T
    for s in schemes:
        y = np.asarray(medians[s])
        coef, residual, *_ = np.linalg.lstsq(design, y, rcond=None)
        ss_res = float(residual[0]) if residual.size else 0.0
        r2 = 1.0 - ss_res / float(((y - y.mean()) ** 2).sum())
        print(f"{s}: {1e3 * coef[0]:.4f} ms/layer + {1e3 * coef[1]:.4f} ms (R2 {r2:.4f})")
    print(f"rows -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
