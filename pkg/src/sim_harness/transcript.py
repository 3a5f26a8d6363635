"""Transcript files and their offline checks.

A transcript is a text file with one line per delivered message::

    000001 box-1 -> pca ENROLL_REQUEST 9f86d081...

plus a binary sidecar ``<path>.bin`` holding the full payloads as
length-prefixed TRANSCRIPT_ENTRY messages.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

from src.common.errors import FixtureMissing, MalformedMessage
from src.crypto_envelope.primitives import digest
from src.crypto_envelope.wire import MsgType, WireMessage, decode, encode, read_text, read_uint, text, u32

from .network import Delivery

logger = logging.getLogger(__name__)

_LEN = struct.Struct(">I")

_NEVER_CARRIED = frozenset({MsgType.TPM_PRIVATE_SECTION, MsgType.CONSUMPTION_RECORD})

# Protected deliveries and the request that must precede each, sent by the receiver.
_GATED = {
    MsgType.DEPOSIT_VOUCHER: MsgType.TOPUP_REQUEST,
    MsgType.ENTITLEMENT: MsgType.KEY_REQUEST,
}


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".bin")


def format_line(delivery: Delivery) -> str:
    try:
        name = delivery.msg_type.name
    except ValueError:
        name = f"0x{delivery.payload[0]:02x}"
    return f"{delivery.seq:06d} {delivery.sender} -> {delivery.receiver} {name} {delivery.payload_digest.hex()}"


def transcript_text(deliveries: list[Delivery]) -> str:
    return "".join(format_line(d) + "\n" for d in deliveries)


def transcript_digest(deliveries: list[Delivery]) -> str:
    """Digest over the text form and every payload; equal digests mean identical runs."""
    body = transcript_text(deliveries).encode("utf-8") + b"".join(d.payload for d in deliveries)
    return digest(body).hex()


def write_transcript(path: str | Path, deliveries: list[Delivery]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(transcript_text(deliveries), encoding="utf-8")
    with open(sidecar_path(path), "wb") as f:
        for d in deliveries:
            entry = encode(WireMessage(MsgType.TRANSCRIPT_ENTRY, (
                u32(d.seq), text(d.sender), text(d.receiver), d.payload,
            )))
            f.write(_LEN.pack(len(entry)))
            f.write(entry)
    logger.info("Transcript saved to %s (%d deliveries)", path, len(deliveries))
    return path


def read_sidecar(path: str | Path) -> list[Delivery]:
    raw = Path(path).read_bytes()
    out: list[Delivery] = []
    pos = 0
    while pos < len(raw):
        if pos + _LEN.size > len(raw):
            raise MalformedMessage("truncated sidecar length prefix")
        (size,) = _LEN.unpack_from(raw, pos)
        pos += _LEN.size
        if pos + size > len(raw):
            raise MalformedMessage("truncated sidecar entry")
        msg = decode(raw[pos:pos + size]).expect(MsgType.TRANSCRIPT_ENTRY, 4)
        pos += size
        out.append(Delivery(read_uint(msg.field(0), 4), read_text(msg.field(1)), read_text(msg.field(2)), msg.field(3)))
    return out


@dataclass
class TranscriptCheck:
    """Outcome of an offline transcript check."""

    deliveries: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def verify_transcript(path: str | Path) -> TranscriptCheck:
    """Re-check a transcript and its sidecar without re-running the scenario."""
    path = Path(path)
    side = sidecar_path(path)
    if not path.exists():
        raise FixtureMissing(str(path))
    if not side.exists():
        raise FixtureMissing(str(side))

    check = TranscriptCheck()
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    try:
        deliveries = read_sidecar(side)
    except MalformedMessage as exc:
        check.problems.append(f"sidecar unreadable: {exc}")
        return check
    check.deliveries = len(deliveries)

    if len(lines) != len(deliveries):
        check.problems.append(f"{len(lines)} transcript lines but {len(deliveries)} sidecar entries")

    attested: set[tuple[str, str]] = set()
    requested: set[tuple[str, str, MsgType]] = set()
    for expected_seq, (line, d) in enumerate(zip(lines, deliveries), start=1):
        where = f"seq {d.seq}"
        if d.seq != expected_seq:
            check.problems.append(f"{where}: expected sequence {expected_seq}")
        if line != format_line(d):
            check.problems.append(f"{where}: line does not match payload digest")
        try:
            msg = decode(d.payload)
        except MalformedMessage as exc:
            check.problems.append(f"{where}: payload does not decode ({exc.detail})")
            continue
        if msg.msg_type in _NEVER_CARRIED:
            check.problems.append(f"{where}: {msg.msg_type.name} on the wire")
        if msg.msg_type is MsgType.ATTEST_NONCE:
            attested.add((d.sender, d.receiver))
        if msg.msg_type in _GATED.values():
            requested.add((d.sender, d.receiver, msg.msg_type))
        gate = _GATED.get(msg.msg_type)
        if gate is not None:
            if (d.sender, d.receiver) not in attested or (d.receiver, d.sender, gate) not in requested:
                check.problems.append(f"{where}: {msg.msg_type.name} to {d.receiver} without prior attestation")

    if check.ok:
        logger.info("%s: %d deliveries verified", path, check.deliveries)
    else:
        for problem in check.problems:
            logger.warning("%s: %s", path, problem)
    return check
