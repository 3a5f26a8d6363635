"""Transport packets and the stand-in stream cipher.

The cipher XORs the payload with a keystream of hash blocks over
(cw, stream_id, period_index, counter). It sits behind ``StreamCipher`` so a
different algorithm can be swapped in without touching callers.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Protocol

from src.common.config import settings
from src.common.errors import FlagStateError, MalformedMessage
from src.crypto_envelope.primitives import DIGEST_SIZE, digest
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    read_uint,
    u8,
    u16,
    u32,
)

from .control_word import ControlWord, derive_cw

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransportPacket:
    stream_id: int
    period_index: int
    scrambled: bool
    payload: bytes

    def __post_init__(self) -> None:
        if len(self.payload) != settings.stream.payload_bytes:
            raise MalformedMessage(
                f"payload must be {settings.stream.payload_bytes} bytes, got {len(self.payload)}"
            )

    def to_bytes(self) -> bytes:
        return encode(WireMessage(MsgType.TRANSPORT_PACKET, (
            u16(self.stream_id), u32(self.period_index), u8(int(self.scrambled)), self.payload,
        )))

    @classmethod
    def from_bytes(cls, raw: bytes) -> TransportPacket:
        msg = decode(raw).expect(MsgType.TRANSPORT_PACKET, 4)
        return cls(
            read_uint(msg.field(0), 2),
            read_uint(msg.field(1), 4),
            bool(read_uint(msg.field(2), 1)),
            msg.field(3),
        )


class StreamCipher(Protocol):
    def apply(self, cw: ControlWord, stream_id: int, period_index: int, payload: bytes) -> bytes: ...


@lru_cache(maxsize=256)
def _keystream(cw: bytes, stream_id: int, period_index: int, length: int) -> bytes:
    prefix = cw + u16(stream_id) + u32(period_index)
    blocks = (length + DIGEST_SIZE - 1) // DIGEST_SIZE
    return b"".join(digest(prefix + u32(i)) for i in range(blocks))[:length]


class HashXorCipher:
    """Key-separating, self-inverse stand-in for the broadcast scrambler."""

    def apply(self, cw: ControlWord, stream_id: int, period_index: int, payload: bytes) -> bytes:
        ks = _keystream(cw.value, stream_id, period_index, len(payload))
        return (int.from_bytes(payload, "big") ^ int.from_bytes(ks, "big")).to_bytes(len(payload), "big")


DEFAULT_CIPHER: StreamCipher = HashXorCipher()


def scramble(cw: ControlWord, pkt: TransportPacket, cipher: StreamCipher = DEFAULT_CIPHER) -> TransportPacket:
    if pkt.scrambled:
        raise FlagStateError("packet is already scrambled")
    payload = cipher.apply(cw, pkt.stream_id, pkt.period_index, pkt.payload)
    return replace(pkt, scrambled=True, payload=payload)


def descramble(cw: ControlWord, pkt: TransportPacket, cipher: StreamCipher = DEFAULT_CIPHER) -> TransportPacket:
    if not pkt.scrambled:
        raise FlagStateError("packet is not scrambled")
    payload = cipher.apply(cw, pkt.stream_id, pkt.period_index, pkt.payload)
    return replace(pkt, scrambled=False, payload=payload)


class HeadEnd:
    """Content source for one stream: generates payloads and scrambles them.

    Args:
        stream_id: Stream this head-end broadcasts.
        secret: Entitlement secret the control words derive from.
        seed: Content seed; equal seeds give equal content.
    """

    def __init__(self, stream_id: int, secret: bytes, seed: int | str = 0) -> None:
        self.stream_id = stream_id
        self.secret = secret
        self._rng = random.Random(f"content:{seed}:{stream_id}")

    def content(self, packet_count: int, first_period: int = 0) -> list[TransportPacket]:
        per_period = settings.stream.packets_per_period
        size = settings.stream.payload_bytes
        return [
            TransportPacket(self.stream_id, first_period + i // per_period, False, self._rng.randbytes(size))
            for i in range(packet_count)
        ]

    def broadcast(
        self, packet_count: int, first_period: int = 0
    ) -> tuple[list[TransportPacket], list[TransportPacket]]:
        """Return (clear originals, scrambled packets) with per-period CW rotation."""
        originals = self.content(packet_count, first_period)
        scrambled: list[TransportPacket] = []
        cw: ControlWord | None = None
        current = -1
        for pkt in originals:
            if pkt.period_index != current:
                current = pkt.period_index
                cw = derive_cw(self.secret, self.stream_id, current)
            scrambled.append(scramble(cw, pkt))
        logger.info(
            "Head-end stream %d: %d packets over %d periods",
            self.stream_id, packet_count, len({p.period_index for p in originals}),
        )
        return originals, scrambled
