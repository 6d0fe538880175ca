"""Fitted asymmetry scale of a late switcher against its predicted dilution.

Runs one SwitchZeroToOne session per switch time and prints the fitted
scale next to (1 - exp(-(u - t_s)/tau)) / (1 - exp(-u/tau)).
"""

import argparse

from unstable_qbc.decay import MONOENERGETIC, ParticleSpecies, dilution_factor
from unstable_qbc.protocol import CommitmentConfig, SwitchZeroToOne, run_session


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--tau-over-t", type=float, default=10.0)
    ap.add_argument("--unveil-over-t", type=float, default=2.0)
    ap.add_argument("--steps", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    species = ParticleSpecies("mono", args.tau_over_t, args.alpha, 782.0, 0.0, MONOENERGETIC)
    cfg = CommitmentConfig(args.n, args.tau_over_t, args.unveil_over_t, species, args.seed)
    u = args.unveil_over_t
    print(f"{'t_switch/T':>10} {'predicted':>10} {'fitted':>10} {'error':>8} {'accepted':>9}")
    for k in range(args.steps):
        ts = u * k / args.steps
        rep = run_session(cfg, SwitchZeroToOne(ts)).report
        pred = dilution_factor(cfg.decay_species, u - ts, u)
        print(f"{ts:10.3f} {pred:10.5f} {rep.fitted_scale:10.5f} {rep.scale_error:8.5f} {str(rep.accepted):>9}")


if __name__ == "__main__":
    main()
