"""CLI entry point for the set-top box simulator.

Usage:
    # Run a bundled scenario and keep its transcript and report:
    python -m src.sim_harness.main simulate \
        --scenario config/scenarios/e2e-purchase.yaml --seed 7 \
        --transcript data/transcripts/e2e.txt --report data/reports/e2e.json

    # Same scenario with an extra network adversary:
    python -m src.sim_harness.main simulate --scenario config/scenarios/e2e-purchase.yaml --adversary Eavesdrop

    # Re-check a transcript offline:
    python -m src.sim_harness.main verify-transcript data/transcripts/e2e.txt
"""

from __future__ import annotations

import argparse
import logging
import sys

from rich.console import Console

from src.common.config import DATA_REPORTS_DIR, DATA_TRANSCRIPTS_DIR
from src.common.errors import StbError
from src.common.logging import setup_logging

from .scenario import AdversarySpec, ScenarioConfig
from .simulation import render_report, run_scenario, write_report
from .transcript import verify_transcript

logger = logging.getLogger(__name__)


def _simulate(args: argparse.Namespace, console: Console) -> int:
    config = ScenarioConfig.from_yaml(args.scenario)
    seed = args.seed if args.seed is not None else config.seed
    extra = [AdversarySpec(kind=kind) for kind in args.adversary or []]
    transcript = args.transcript or DATA_TRANSCRIPTS_DIR / f"{config.name}-{seed}.txt"

    report, _ = run_scenario(config, seed=seed, adversaries=extra, transcript_path=transcript)
    render_report(report, console)
    if args.report:
        write_report(args.report, report)
    elif not args.no_report:
        write_report(DATA_REPORTS_DIR / f"{config.name}-{seed}.json", report)
    return 0 if report.passed else 1


def _verify(args: argparse.Namespace, console: Console) -> int:
    check = verify_transcript(args.path)
    if check.ok:
        console.print(f"[green]OK[/green] {check.deliveries} deliveries verified")
        return 0
    for problem in check.problems:
        console.print(f"[red]FAIL[/red] {problem}")
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Trusted set-top box simulator")
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Log every delivery decision (DEBUG level)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run a scenario file")
    simulate.add_argument(
        "--scenario",
        type=str,
        required=True,
        help="Scenario YAML (e.g., config/scenarios/e2e-purchase.yaml)",
    )
    simulate.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Override the scenario seed (0 <= seed < 2**64)",
    )
    simulate.add_argument(
        "--adversary",
        action="append",
        choices=["Replay", "TamperLog", "Eavesdrop", "RelayTamper"],
        help="Install an extra network adversary (repeatable)",
    )
    simulate.add_argument(
        "--transcript",
        type=str,
        help="Transcript path (default: data/transcripts/<scenario>-<seed>.txt)",
    )
    simulate.add_argument(
        "--report",
        type=str,
        help="JSON report path (default: data/reports/<scenario>-<seed>.json)",
    )
    simulate.add_argument(
        "--no-report",
        action="store_true",
        help="Do not write a JSON report",
    )

    verify = sub.add_parser("verify-transcript", help="Re-check a transcript and its .bin sidecar")
    verify.add_argument("path", type=str, help="Transcript text file")

    args = parser.parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.WARNING, "src")
    console = Console()

    try:
        if args.command == "simulate":
            return _simulate(args, console)
        return _verify(args, console)
    except StbError as exc:
        logger.error("%s: %s", exc.code, exc.detail)
        console.print(f"[red]{exc.code}[/red] {exc.detail}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
