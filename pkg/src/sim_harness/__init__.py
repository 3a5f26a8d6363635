# Sim harness: deterministic network, adversaries, scenarios and the CLI
"""
Runs every protocol over one seeded, single-threaded message queue so that
scenarios, attacks and their transcripts are reproducible byte for byte.
"""

from .adversary import Adversary, Eavesdrop, FakeTpm, FakeTpmBox, RelayTamper, Replay, TamperLog
from .network import Delivery, SimNetwork
from .scenario import ScenarioConfig
from .simulation import ScenarioReport, run_scenario
from .transcript import verify_transcript, write_transcript

__all__ = [
    "Adversary",
    "Delivery",
    "Eavesdrop",
    "FakeTpm",
    "FakeTpmBox",
    "RelayTamper",
    "Replay",
    "ScenarioConfig",
    "ScenarioReport",
    "SimNetwork",
    "TamperLog",
    "run_scenario",
    "verify_transcript",
    "write_transcript",
]
