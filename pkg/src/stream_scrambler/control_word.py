"""Control words: 8 bytes, 6 of entropy, checksums at positions 3 and 7."""

from __future__ import annotations

from dataclasses import dataclass

from src.common.errors import MalformedMessage
from src.crypto_envelope.primitives import digest
from src.crypto_envelope.wire import u16, u32

CW_SIZE = 8
ENTROPY_SIZE = 6
SECRET_SIZE = 16


@dataclass(frozen=True)
class ControlWord:
    value: bytes

    def __post_init__(self) -> None:
        v = self.value
        if len(v) != CW_SIZE:
            raise MalformedMessage(f"control word must be {CW_SIZE} bytes")
        if v[3] != (v[0] + v[1] + v[2]) % 256 or v[7] != (v[4] + v[5] + v[6]) % 256:
            raise MalformedMessage("control word checksum mismatch")

    @property
    def entropy(self) -> bytes:
        return self.value[0:3] + self.value[4:7]

    def __bytes__(self) -> bytes:
        return self.value

    def __repr__(self) -> str:
        return f"ControlWord({self.value.hex()})"


def cw_new(entropy: bytes) -> ControlWord:
    """Build a CW from 6 entropy bytes, filling in both checksum bytes."""
    if len(entropy) != ENTROPY_SIZE:
        raise MalformedMessage(f"control word entropy must be {ENTROPY_SIZE} bytes")
    a, b = entropy[:3], entropy[3:]
    return ControlWord(a + bytes([sum(a) % 256]) + b + bytes([sum(b) % 256]))


def derive_cw(secret: bytes, stream_id: int, period_index: int) -> ControlWord:
    """CW for one crypto period, computable independently by head-end and box."""
    if len(secret) != SECRET_SIZE:
        raise MalformedMessage(f"entitlement secret must be {SECRET_SIZE} bytes")
    return cw_new(digest(secret + u16(stream_id) + u32(period_index))[:ENTROPY_SIZE])
