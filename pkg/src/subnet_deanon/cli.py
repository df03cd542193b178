"""Command-line entry point: ``subnet-deanon <command> ...``.

Every command reads and writes the run-directory layout described in
:mod:`subnet_deanon.scenario`, so the stages can be rerun one at a time.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import DeanonError
from .scenario import (run_scenario, stage_analyze, stage_report, stage_score, stage_simulate,
                       stage_verify)


def _heuristic_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c1-slack", type=float, help="fraction of the ideal non-backbone share required")
    p.add_argument("--c3-divisor", type=float, help="minimum deliveries = expected / divisor")
    p.add_argument("--c4-sigma", type=float, help="outlier distance in standard deviations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subnet-deanon",
                                     description="Locate validators behind gossip peers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a scenario and write observer logs")
    p.add_argument("config")
    p.add_argument("--out", default="runs", help="parent directory for the run directory")
    p.add_argument("--full", action="store_true", help="also analyse, verify and score")

    p = sub.add_parser("analyze", help="classify every qualified peer")
    p.add_argument("run_dir")
    _heuristic_flags(p)

    p = sub.add_parser("verify", help="check located sets against entity labels")
    p.add_argument("run_dir")
    p.add_argument("--labels", required=True)

    sub.add_parser("report", help="write summary.json").add_argument("run_dir")
    sub.add_parser("score", help="compare against ground truth").add_argument("run_dir")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            config = load_config(args.config)
            if args.full:
                print(run_scenario(config, args.out).run_dir)
            else:
                print(stage_simulate(config, args.out))
        elif args.command == "analyze":
            for report in stage_analyze(args.run_dir, c1_slack=args.c1_slack,
                                        c3_divisor=args.c3_divisor, c4_sigma=args.c4_sigma):
                print(f"{report.observer}: {len(report.deanonymized())} peers deanonymized, "
                      f"{len(report.located_validators())} validators located")
        elif args.command == "verify":
            for k, sp in enumerate(stage_verify(args.run_dir, args.labels)):
                print(f"obs{k}: service providers {list(sp.peers)}")
        elif args.command == "score":
            for k, card in enumerate(stage_score(args.run_dir)):
                print(f"obs{k}: precision {card.micro_precision:.4f} recall {card.micro_recall:.4f} "
                      f"false positives {len(card.false_positives)}")
        elif args.command == "report":
            json.dump(stage_report(args.run_dir), sys.stdout, indent=2, sort_keys=True)
            print()
    except DeanonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
