# Stream scrambler: control words, transport packets, head-end
"""
DVB-like scrambling under rotating control words.
"""

from .control_word import ControlWord, cw_new, derive_cw
from .scrambler import (
    DEFAULT_CIPHER,
    HashXorCipher,
    HeadEnd,
    StreamCipher,
    TransportPacket,
    descramble,
    scramble,
)
from .stream_file import read_stream, write_stream

__all__ = [
    "DEFAULT_CIPHER",
    "ControlWord",
    "HashXorCipher",
    "HeadEnd",
    "StreamCipher",
    "TransportPacket",
    "cw_new",
    "derive_cw",
    "descramble",
    "read_stream",
    "scramble",
    "write_stream",
]
