"""Command line interface.

    flowfilters run --config cfg.json [--filters a,b] [--particles N]
                    [--seed S] [--paper-scale] [--out DIR] [--format csv|json]
    flowfilters validate --config cfg.json
    flowfilters list-filters

Exit codes: 0 success, 1 configuration error, 2 runtime failure in all runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from .errors import ConfigError
from .filters import FILTER_IDS
from .harness import CampaignConfig, emit_results, report_failures, run_campaign


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowfilters",
                                     description="Particle flow filtering benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark campaign")
    run_p.add_argument("--config", required=True, help="campaign config JSON")
    run_p.add_argument("--filters", help="comma-separated filter ids (overrides config)")
    run_p.add_argument("--particles", type=int, help="particle count override")
    run_p.add_argument("--seed", type=int, help="master seed override")
    run_p.add_argument("--paper-scale", action="store_true",
                       help="switch to 100 trajectories x 5 reruns with 500 particles")
    run_p.add_argument("--out", help="output directory override")
    run_p.add_argument("--format", choices=("csv", "json"), help="detail file format")

    val_p = sub.add_parser("validate", help="validate a campaign config")
    val_p.add_argument("--config", required=True)

    sub.add_parser("list-filters", help="print the available filter ids")
    return parser


def _apply_overrides(cfg: CampaignConfig, args: argparse.Namespace) -> CampaignConfig:
    updates = {}
    if args.paper_scale:
        updates.update(n_trajectories=100, n_reruns=5, n_particles=500)
    if args.filters:
        updates["filters"] = tuple(p.strip() for p in args.filters.split(",") if p.strip())
    if args.particles is not None:
        updates["n_particles"] = args.particles
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out:
        updates["out_dir"] = args.out
    if args.format:
        updates["format"] = args.format
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list-filters":
        for fid in FILTER_IDS:
            print(fid)
        return 0

    try:
        cfg = CampaignConfig.from_json(args.config)
        if args.command == "run":
            cfg = _apply_overrides(cfg, args)
        cfg.validate()
    except (ConfigError, OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"config ok: scenario={cfg.scenario} filters={','.join(cfg.filters)} "
              f"horizon={cfg.resolved_horizon()}")
        return 0

    records = run_campaign(cfg)
    n_failed = report_failures(records)
    if n_failed == len(records):
        print("all runs failed", file=sys.stderr)
        return 2
    detail_path, summary_path = emit_results(records, cfg.format, cfg.out_dir,
                                             timing_enabled=cfg.timing_enabled)
    print(f"wrote {detail_path} and {summary_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
