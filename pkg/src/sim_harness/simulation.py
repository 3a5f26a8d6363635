"""Run a scenario end to end and report the verdicts."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from rich.console import Console
from rich.table import Table

from src.common.config import settings

from .assertions import AssertionResult, evaluate
from .runner import OK, Outcome, World, build_world, run_events
from .scenario import AdversarySpec, ScenarioConfig
from .transcript import transcript_digest, write_transcript

logger = logging.getLogger(__name__)


@dataclass
class ScenarioReport:
    """Verdicts of one run, JSON-serializable."""

    scenario: str
    seed: int
    deliveries: int
    transcript_digest: str
    queue_empty: bool
    outcomes: list[Outcome] = field(default_factory=list)
    assertions: list[AssertionResult] = field(default_factory=list)
    transcript_path: str | None = None
    crypto: dict[str, str] = field(default_factory=lambda: settings.crypto.model_dump())

    @property
    def passed(self) -> bool:
        return self.queue_empty and all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def run_scenario(
    config: ScenarioConfig,
    seed: int | None = None,
    adversaries: list[AdversarySpec] | None = None,
    transcript_path: str | Path | None = None,
) -> tuple[ScenarioReport, World]:
    """Build the world, run the script to quiescence, evaluate every assertion.

    Raises:
        ConfigError: the scenario does not describe a runnable world.
        FixtureMissing: a referenced fixture file does not exist.
    """
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    logger.info("Scenario %s (seed %d)", config.name, config.seed)
    world = build_world(config, adversaries)
    run_events(world)
    results = evaluate(world)

    transcript = world.net.transcript
    report = ScenarioReport(
        scenario=config.name,
        seed=config.seed,
        deliveries=len(transcript),
        transcript_digest=transcript_digest(transcript),
        queue_empty=not world.net.queue,
        outcomes=world.outcomes,
        assertions=results,
    )
    if transcript_path is not None:
        report.transcript_path = str(write_transcript(transcript_path, transcript))
    logger.info("Scenario %s: %s", config.name, "PASS" if report.passed else "FAIL")
    return report, world


def write_report(path: str | Path, report: ScenarioReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, ensure_ascii=False, indent=2)
    logger.info("Report saved to %s", path)
    return path


def render_report(report: ScenarioReport, console: Console | None = None) -> None:
    """Print events and verdicts as rich tables."""
    console = console or Console()

    events = Table(title=f"{report.scenario} (seed {report.seed}): events")
    events.add_column("#", justify="right")
    events.add_column("event")
    events.add_column("result")
    events.add_column("detail", overflow="fold")
    for o in report.outcomes:
        style = "green" if o.result == OK else ("yellow" if o.result == o.expect else "red")
        events.add_row(str(o.index), o.label, f"[{style}]{o.result}[/{style}]", o.detail)
    console.print(events)

    verdicts = Table(title="assertions")
    verdicts.add_column("assertion")
    verdicts.add_column("verdict")
    verdicts.add_column("detail", overflow="fold")
    for a in report.assertions:
        verdicts.add_row(a.name, "[green]PASS[/green]" if a.passed else "[red]FAIL[/red]", a.detail)
    verdicts.add_row("queue empty", "[green]PASS[/green]" if report.queue_empty else "[red]FAIL[/red]", "")
    console.print(verdicts)
    console.print(f"{report.deliveries} deliveries, transcript {report.transcript_digest[:16]}")
    console.print(f"schemes: {report.crypto['signature_scheme']}, {report.crypto['encryption_scheme']}"
                  f" (labelled {report.crypto['compat_label']})")
