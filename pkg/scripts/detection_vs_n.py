"""Detection power of each strategy as a function of the number of qubits.

Thin wrapper over the harness that writes CSV, suitable for plotting.
"""

import argparse
import sys

from unstable_qbc.decay import MONOENERGETIC, ParticleSpecies
from unstable_qbc.harness import ExperimentPlan, emit_csv, run_plan
from unstable_qbc.protocol import STRATEGY_NAMES, CommitmentConfig


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, action="append", help="repeatable; default 100..10000 log-spaced")
    ap.add_argument("--alpha", type=float, default=0.9)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    n_values = tuple(args.n or (100, 300, 1000, 3000, 10000))
    species = ParticleSpecies("mono", 10.0, args.alpha, 782.0, 0.0, MONOENERGETIC)
    plan = ExperimentPlan(
        CommitmentConfig(n=n_values[0], species=species),
        tuple(STRATEGY_NAMES),
        n_values,
        trials=args.trials,
        master_seed=args.seed,
    )
    report = run_plan(plan, workers=args.workers)
    emit_csv(report, sys.stdout if args.out == "-" else args.out)


if __name__ == "__main__":
    main()
