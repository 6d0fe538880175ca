"""Experiment runner: sweeps over strategies and N, with JSON/CSV output."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .decay import MONOENERGETIC, PRESETS, ParticleSpecies, load_species_file
from .protocol import (
    SCHEMA_VERSION,
    STRATEGY_NAMES,
    CommitmentConfig,
    config_to_dict,
    run_session,
    strategy_from_name,
)
from .streams import derive_seed, make_rng
from .verify import TestConfig, concealing_audit

CSV_HEADER = ("strategy", "N", "trials", "rejected", "power", "ci_low", "ci_high")


@dataclass(frozen=True)
class ExperimentPlan:
    config: CommitmentConfig
    strategies: tuple[str, ...]
    n_values: tuple[int, ...]
    trials: int = 20
    master_seed: int = 0
    switch_time: float = 1.0
    guess_rule: str = "posterior"
    test: TestConfig = field(default_factory=TestConfig)
    output: str | None = None
    output_format: str = "json"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials: must be >= 1")
        if any(n < 1 for n in self.n_values):
            raise ValueError("n: sweep values must be positive")
        if self.output_format not in ("json", "csv"):
            raise ValueError(f"format: expected json or csv, got {self.output_format!r}")
        for s in self.strategies:
            strategy_from_name(s)
        if "switch01" in self.strategies and not 0 <= self.switch_time < self.config.unveil_time:
            raise ValueError("switch_over_t: must lie in [0, unveil_over_t)")

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "strategies": list(self.strategies),
            "n_values": list(self.n_values),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "switch_time": self.switch_time,
            "guess_rule": self.guess_rule,
            "test": asdict(self.test),
            "output_format": self.output_format,
        }


@dataclass
class PointSummary:
    strategy: str
    n: int
    trials: int
    rejected: int
    power: float
    ci_low: float
    ci_high: float


@dataclass
class RunReport:
    plan: ExperimentPlan
    points: list[PointSummary]
    trials: list[dict]
    wall_time: float
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "plan": self.plan.to_dict(),
            "points": [asdict(p) for p in self.points],
            "trials": self.trials,
            "wall_time_s": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _run_trial(task) -> dict:
    plan, si, ni, ti = task
    name, n = plan.strategies[si], plan.n_values[ni]
    seed = derive_seed(plan.master_seed, si, ni, ti)
    cfg = replace(plan.config, n=n, seed=seed)
    strategy = strategy_from_name(name, plan.switch_time, plan.guess_rule)
    report = run_session(cfg, strategy, plan.test).report
    return {"strategy": name, "n": n, "trial": ti, "seed": seed, "report": report.to_dict()}


def run_plan(plan: ExperimentPlan, workers: int = 1) -> RunReport:
    """Run every (strategy, N, trial) session; results are ordered by index, not completion."""
    start = time.perf_counter()
    tasks = [
        (plan, si, ni, ti)
        for si in range(len(plan.strategies))
        for ni in range(len(plan.n_values))
        for ti in range(plan.trials)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        records = [_run_trial(t) for t in tasks]

    points = []
    for si, name in enumerate(plan.strategies):
        for ni, n in enumerate(plan.n_values):
            block = records[(si * len(plan.n_values) + ni) * plan.trials :][: plan.trials]
            rejected = sum(not r["report"]["accepted"] for r in block)
            lo, hi = wilson_interval(rejected, plan.trials)
            points.append(PointSummary(name, n, plan.trials, rejected, rejected / plan.trials, lo, hi))
    return RunReport(plan, points, records, time.perf_counter() - start)


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def emit_csv(report: RunReport, path) -> None:
    """One row per (strategy, N); ``path`` may be a filename or a text stream."""
    rows = [[_fmt(getattr(p, a)) for a in ("strategy", "n", "trials", "rejected", "power", "ci_low", "ci_high")] for p in report.points]
    if hasattr(path, "write"):
        w = csv.writer(path, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_audit(n_small: int, strategies, seed: int) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "n_small": n_small, "trace_distance": {}}
    for si, name in enumerate(strategies):
        rng = make_rng(seed, si)
        out["trace_distance"][name] = concealing_audit(n_small, rng, strategy_from_name(name))
    return out


# -- CLI ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbc-sim", description=__doc__)
    p.add_argument("--n", type=int, action="append", help="security parameter N (repeatable sweep)")
    p.add_argument("--strategy", action="append", choices=STRATEGY_NAMES, help="Alice strategy (repeatable)")
    p.add_argument("--tau-over-t", type=float, default=10.0)
    p.add_argument("--unveil-over-t", type=float, default=2.0)
    p.add_argument("--switch-over-t", type=float, default=1.0)
    p.add_argument("--guess-rule", choices=("random", "posterior"), default="posterior")
    p.add_argument("--species", default="neutron", help="preset name (neutron, muon, co60 or from --species-file)")
    p.add_argument("--species-file", help="JSON file with extra species presets")
    p.add_argument("--alpha", type=float, help="override the asymmetry coefficient")
    p.add_argument("--endpoint-kev", type=float)
    p.add_argument("--electron-mass-kev", type=float)
    p.add_argument("--monoenergetic", action="store_true", help="fix |p| at the endpoint momentum")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--significance", type=float, default=1e-3)
    p.add_argument("--theta-bins", type=int, default=10)
    p.add_argument("--p-bins", type=int, default=5)
    p.add_argument("--min-events-per-bin", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--audit-concealing", type=int, metavar="N_SMALL", help="run the concealing audit instead of a sweep")
    return p


def _species_from_args(args) -> ParticleSpecies:
    presets = dict(PRESETS)
    if args.species_file:
        presets.update(load_species_file(args.species_file))
    if args.species not in presets:
        raise ValueError(f"species: unknown preset {args.species!r}")
    sp = presets[args.species]
    changes = {}
    if args.alpha is not None:
        changes["asymmetry"] = args.alpha
    if args.endpoint_kev is not None:
        changes["endpoint_kev"] = args.endpoint_kev
    if args.electron_mass_kev is not None:
        changes["electron_mass_kev"] = args.electron_mass_kev
    if args.monoenergetic:
        changes["spectrum"] = MONOENERGETIC
    return replace(sp, **changes)


def plan_from_args(args) -> ExperimentPlan:
    species = _species_from_args(args)
    n_values = tuple(args.n or [1000])
    config = CommitmentConfig(
        n=n_values[0],
        tau_over_T=args.tau_over_t,
        unveil_time_over_T=args.unveil_over_t,
        species=species,
        seed=args.seed,
    )
    test = TestConfig(args.significance, args.theta_bins, args.p_bins, args.min_events_per_bin)
    return ExperimentPlan(
        config=config,
        strategies=tuple(args.strategy or STRATEGY_NAMES),
        n_values=n_values,
        trials=args.trials,
        master_seed=args.seed,
        switch_time=args.switch_over_t,
        guess_rule=args.guess_rule,
        test=test,
        output=args.out,
        output_format=args.format,
    )


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.audit_concealing is not None:
            strategies = tuple(args.strategy or STRATEGY_NAMES)
            result = run_audit(args.audit_concealing, strategies, args.seed)
            plan = None
        else:
            plan = plan_from_args(args)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1

    try:
        if plan is None:
            _write(json.dumps(result, sort_keys=True, indent=1) + "\n", args.out)
            return 0
        report = run_plan(plan, workers=args.workers)
        if plan.output_format == "csv":
            if args.out is None:
                buf = io.StringIO()
                emit_csv(report, buf)
                _write(buf.getvalue(), None)
            else:
                emit_csv(report, args.out)
        else:
            _write(report.to_json() + "\n", args.out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
