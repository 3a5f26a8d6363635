"""Boot chain measurement and log verification."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

from src.common.config import settings
from src.common.errors import StateMismatch
from src.crypto_envelope.primitives import digest
from src.tpm_core.models import Quote
from src.tpm_core.tpm import Tpm

from .models import BootImage, BootLog, MeasurementEvent
from .reference import ReferenceTable

logger = logging.getLogger(__name__)

_ZERO = bytes(32)


class VerdictReason(str, Enum):
    LOG_MISMATCH = "LogMismatch"
    UNKNOWN_CONFIGURATION = "UnknownConfiguration"
    NONCE_MISMATCH = "NonceMismatch"


@dataclass(frozen=True)
class Verdict:
    trusted: bool
    reason: VerdictReason | None = None
    configuration: str | None = None

    @classmethod
    def untrusted(cls, reason: VerdictReason) -> Verdict:
        return cls(False, reason)

    def __str__(self) -> str:
        if self.trusted:
            return f"Trusted({self.configuration})"
        return f"Untrusted({self.reason.value})"


def boot(tpm: Tpm, images: Iterable[BootImage | tuple[int, str, bytes]]) -> BootLog:
    """Measure each image, extend its PCR, and return the log."""
    if any(v != _ZERO for v in tpm.state.pcrs):
        raise StateMismatch("boot requires PCRs at reset values")
    events = []
    for pcr_index, name, image in images:
        event = MeasurementEvent.measure(pcr_index, name, image)
        tpm.pcr_extend(pcr_index, event.digest)
        events.append(event)
    logger.debug("Booted %d components", len(events))
    return BootLog(tuple(events))


def replay(log: BootLog, pcr_count: int | None = None) -> list[bytes]:
    """PCR bank a log implies, starting from reset values."""
    pcrs = [_ZERO] * (pcr_count or settings.tpm.pcr_count)
    for event in log.events:
        if not 0 <= event.pcr_index < len(pcrs):
            raise StateMismatch(f"event targets PCR {event.pcr_index}")
        pcrs[event.pcr_index] = digest(pcrs[event.pcr_index] + event.digest)
    return pcrs


def expected_pcrs(images: Iterable[BootImage | tuple[int, str, bytes]]) -> list[bytes]:
    """PCR bank a pristine boot of ``images`` produces."""
    return replay(BootLog(tuple(MeasurementEvent.measure(*i) for i in images)))


def verify_log(
    log: BootLog,
    reference: ReferenceTable,
    quote: Quote,
    expected_nonce: bytes | None = None,
    required_pcrs: Iterable[int] | None = None,
) -> Verdict:
    """Judge a quoted boot.

    The quote signature must already have been checked against the AIK. The
    quote must cover every register in ``required_pcrs`` (default: the
    attested selection from settings); the box does not get to pick.
    """
    if expected_nonce is not None and quote.external_nonce != expected_nonce:
        return Verdict.untrusted(VerdictReason.NONCE_MISMATCH)
    if not all(e.is_consistent() for e in log.events):
        return Verdict.untrusted(VerdictReason.LOG_MISMATCH)
    try:
        replayed = replay(log)
    except StateMismatch:
        return Verdict.untrusted(VerdictReason.LOG_MISMATCH)
    quoted = quote.values_by_index()
    required = set(settings.tpm.attest_pcrs if required_pcrs is None else required_pcrs)
    if not required <= set(quoted):
        logger.warning("Quote covers PCRs %s, %s required", sorted(quoted), sorted(required))
        return Verdict.untrusted(VerdictReason.UNKNOWN_CONFIGURATION)
    if any(replayed[i] != v for i, v in quoted.items() if i < len(replayed)):
        return Verdict.untrusted(VerdictReason.LOG_MISMATCH)
    name = reference.match(quoted)
    if name is None:
        return Verdict.untrusted(VerdictReason.UNKNOWN_CONFIGURATION)
    return Verdict(True, configuration=name)
