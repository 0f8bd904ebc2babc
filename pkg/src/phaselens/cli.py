"""Command line entry point: ``phaselens dense|sparse|theory``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .core import DomainError
from .experiments import (ExperimentPlan, ensure_writable, preset, run_experiment,
                          run_theory_suite)

log = logging.getLogger("phaselens")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phaselens",
                                description="Noisy phase retrieval experiments.")
    p.add_argument("kind", choices=["dense", "sparse", "theory"])
    p.add_argument("--plan", help="JSON experiment plan (overrides --preset)")
    p.add_argument("--out", help="output directory (default: plan output_path)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="trials per m")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_plan(args) -> ExperimentPlan:
    plan = ExperimentPlan.load(args.plan) if args.plan else preset(args.preset, args.kind)
    if plan.kind != args.kind:
        raise DomainError(f"plan kind {plan.kind!r} does not match subcommand {args.kind!r}")
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["output_path"] = args.out
    return dataclasses.replace(plan, **changes) if changes else plan


def _theory(plan: ExperimentPlan) -> int:
    ensure_writable(plan.output_path)
    checks = run_theory_suite(plan.master_seed)
    width = max(len(c.name) for c in checks)
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  {c.value:.6g}  ({c.threshold})")
    with open(os.path.join(plan.output_path, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({"plan": plan.to_dict(), "checks": [dataclasses.asdict(c) for c in checks]},
                  fh, indent=2)
    return 0 if all(c.passed for c in checks) else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        plan = _load_plan(args)
        if plan.kind == "theory":
            return _theory(plan)
        report = run_experiment(plan, workers=args.workers)
    except (DomainError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"phaselens: error: {exc}", file=sys.stderr)
        return 1
    print(f"{'m':>6}  {'trials':>6}  {'conv':>4}  {'mean_rho':>10}  {'std_rho':>10}")
    for a in report.per_m:
        mean = "nan" if a.mean_rho is None else f"{a.mean_rho:.4f}"
        std = "nan" if a.std_rho is None else f"{a.std_rho:.4f}"
        print(f"{a.m:>6}  {a.trials:>6}  {a.converged:>4}  {mean:>10}  {std:>10}")
    if report.rho_cv is not None:
        print(f"coefficient of variation of mean_rho across m: {report.rho_cv:.4f}")
    print(f"wrote {os.path.join(plan.output_path, 'trials.csv')} and report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
