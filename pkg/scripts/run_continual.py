#!/usr/bin/env python3
"""Drive the continual optimizer over a sequence of channel tasks.

Each task is a fresh scenario draw (users moved inside the cluster);
the meta-learner carries its policy, memory, and replay buffer across
tasks and the state can be checkpointed and resumed:

    python scripts/run_continual.py --tasks 4 --epochs 6 --state state.npz
"""

import argparse
import os
import sys

from simsec.configio import RunConfig, load_config
from simsec.continual import MetaConfig, load_state, mhacl_run, save_state
from simsec.em import build_correlation, build_geometry, build_propagation, sample_scenario
from simsec.linalg import SeededRng


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--tasks", type=int, default=4)
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--outer", type=int, default=3)
    parser.add_argument("--inner", type=int, default=10)
    parser.add_argument("--spsa-samples", type=int, default=4)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--state", help="checkpoint path (.npz); resumed if present")
    args = parser.parse_args(argv)

    rc = load_config(args.config) if args.config else RunConfig()
    meta = MetaConfig(
        n_epochs=args.epochs,
        n_outer=args.outer,
        n_inner=args.inner,
        spsa_samples=args.spsa_samples,
        lr_phase=rc.meta.lr_phase,
        lr_power=rc.meta.lr_power,
    )
    cfg = rc.system
    geom = build_geometry(cfg)
    prop = build_propagation(geom)
    corr = build_correlation(geom)

    state = None
    if args.state and os.path.exists(args.state):
        state = load_state(args.state)
        print(f"resumed state at task {state.task_index}")

    rng = SeededRng(args.seed)
    offset = state.task_index if state is not None else 0
    scenarios = [
        sample_scenario(cfg, geom, corr, rng.split("scenario", offset + t))
        for t in range(args.tasks)
    ]
    results, state = mhacl_run(cfg, prop, scenarios, rng.split("learn"), meta, state=state)

    for t, result in enumerate(results):
        print(f"task {offset + t}: best wssr {result.wssr:.4f} "
              f"({len(result.trace)} recorded steps, "
              f"final epoch loss {result.epoch_losses[-1]:.4f})")
    if args.state:
        save_state(args.state, state)
        print(f"state ({state.task_index} tasks) -> {args.state}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
