# Measured boot: boot chain, measurement log, verifier
"""
Measures boot images into PCRs and judges quoted logs against a table of
known-good configurations.
"""

from .boot import Verdict, VerdictReason, boot, expected_pcrs, replay, verify_log
from .models import BootImage, BootLog, BootManifest, MeasurementEvent
from .reference import ReferenceTable

__all__ = [
    "BootImage",
    "BootLog",
    "BootManifest",
    "MeasurementEvent",
    "ReferenceTable",
    "Verdict",
    "VerdictReason",
    "boot",
    "expected_pcrs",
    "replay",
    "verify_log",
]
