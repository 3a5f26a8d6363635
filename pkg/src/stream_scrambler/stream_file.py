"""Stream fixture files: a sequence of length-prefixed TRANSPORT_PACKET records."""

from __future__ import annotations

import struct
from collections.abc import Iterable
from pathlib import Path

from src.common.errors import FixtureMissing, MalformedMessage

from .scrambler import TransportPacket

_LEN = struct.Struct(">I")


def write_stream(path: str | Path, packets: Iterable[TransportPacket]) -> int:
    """Write packets to ``path``; returns the packet count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "wb") as f:
        for pkt in packets:
            raw = pkt.to_bytes()
            f.write(_LEN.pack(len(raw)) + raw)
            count += 1
    return count


def read_stream(path: str | Path) -> list[TransportPacket]:
    path = Path(path)
    if not path.exists():
        raise FixtureMissing(str(path))
    data = path.read_bytes()
    packets: list[TransportPacket] = []
    pos = 0
    while pos < len(data):
        if pos + _LEN.size > len(data):
            raise MalformedMessage("truncated stream record prefix")
        (length,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + length > len(data):
            raise MalformedMessage("stream record exceeds file")
        packets.append(TransportPacket.from_bytes(data[pos:pos + length]))
        pos += length
    return packets
