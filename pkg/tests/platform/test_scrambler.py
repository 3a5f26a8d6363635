"""Tests for control words, the stream cipher and stream files."""

import random

import pytest

from src.common.errors import FixtureMissing, FlagStateError, MalformedMessage
from src.common.config import settings
from src.stream_scrambler.control_word import ControlWord, cw_new, derive_cw
from src.stream_scrambler.scrambler import HeadEnd, TransportPacket, descramble, scramble
from src.stream_scrambler.stream_file import read_stream, write_stream

SECRET = bytes(range(16))


def _packet(period: int = 0, fill: int = 0x5A) -> TransportPacket:
    return TransportPacket(7, period, False, bytes([fill]) * settings.stream.payload_bytes)


class TestControlWord:
    def test_checksums_filled_in(self):
        cw = cw_new(b"\x01\x02\x03\x10\x20\x30")
        assert cw.value == b"\x01\x02\x03\x06\x10\x20\x30\x60"
        assert cw.entropy == b"\x01\x02\x03\x10\x20\x30"

    def test_checksum_wraps(self):
        assert cw_new(b"\xff\xff\x02\x00\x00\x00").value[3] == 0

    def test_bad_checksum_rejected(self):
        with pytest.raises(MalformedMessage):
            ControlWord(b"\x01\x02\x03\x00\x10\x20\x30\x60")

    def test_wrong_entropy_length(self):
        with pytest.raises(MalformedMessage):
            cw_new(b"\x01\x02")

    def test_derivation_depends_on_every_input(self):
        base = derive_cw(SECRET, 7, 0)
        assert derive_cw(SECRET, 7, 0) == base
        assert derive_cw(SECRET, 8, 0) != base
        assert derive_cw(SECRET, 7, 1) != base
        assert derive_cw(bytes(16), 7, 0) != base

    def test_secret_size(self):
        with pytest.raises(MalformedMessage):
            derive_cw(b"short", 7, 0)


class TestScrambler:
    def test_round_trip(self):
        cw = derive_cw(SECRET, 7, 0)
        pkt = _packet()
        scrambled = scramble(cw, pkt)
        assert scrambled.scrambled
        assert scrambled.payload != pkt.payload
        assert descramble(cw, scrambled) == pkt

    def test_wrong_cw_garbles(self):
        scrambled = scramble(derive_cw(SECRET, 7, 0), _packet())
        assert descramble(derive_cw(SECRET, 7, 1), scrambled).payload != _packet().payload

    def test_flag_state(self):
        cw = derive_cw(SECRET, 7, 0)
        with pytest.raises(FlagStateError):
            descramble(cw, _packet())
        with pytest.raises(FlagStateError):
            scramble(cw, scramble(cw, _packet()))

    def test_payload_size_enforced(self):
        with pytest.raises(MalformedMessage):
            TransportPacket(7, 0, False, b"short")

    def test_packet_encoding(self):
        pkt = _packet(period=3)
        assert TransportPacket.from_bytes(pkt.to_bytes()) == pkt


class TestHeadEnd:
    def test_periods_rotate(self):
        per = settings.stream.packets_per_period
        originals, scrambled = HeadEnd(7, SECRET, seed=1).broadcast(per * 2 + 5)
        assert [p.period_index for p in originals[per - 1:per + 1]] == [0, 1]
        assert originals[-1].period_index == 2
        for original, pkt in zip(originals, scrambled):
            cw = derive_cw(SECRET, 7, pkt.period_index)
            assert descramble(cw, pkt) == original

    def test_content_is_seeded(self):
        a, _ = HeadEnd(7, SECRET, seed=1).broadcast(10)
        b, _ = HeadEnd(7, SECRET, seed=1).broadcast(10)
        c, _ = HeadEnd(7, SECRET, seed=2).broadcast(10)
        assert a == b
        assert a != c

    def test_first_period_offset(self):
        originals, _ = HeadEnd(7, SECRET).broadcast(3, first_period=40)
        assert {p.period_index for p in originals} == {40}


class TestStreamFile:
    def test_write_and_read(self, tmp_path):
        _, scrambled = HeadEnd(7, SECRET).broadcast(25)
        path = tmp_path / "stream.bin"
        assert write_stream(path, scrambled) == 25
        assert read_stream(path) == scrambled

    def test_missing(self, tmp_path):
        with pytest.raises(FixtureMissing):
            read_stream(tmp_path / "none.bin")

    def test_truncated(self, tmp_path):
        path = tmp_path / "stream.bin"
        write_stream(path, [_packet()])
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(MalformedMessage):
            read_stream(path)


class TestDerivation:
    def test_periods_give_distinct_words(self):
        words = {derive_cw(SECRET, 7, period).value for period in range(10_000)}
        assert len(words) == 10_000

    def test_secrets_give_distinct_words(self):
        rng = random.Random("secrets")
        words = {derive_cw(rng.randbytes(16), 7, 42).value for _ in range(100)}
        assert len(words) == 100

    @pytest.mark.parametrize("position", range(6))
    def test_perturbed_word_garbles_every_packet(self, position):
        for period in range(100):
            cw = derive_cw(SECRET, 7, period)
            entropy = bytearray(cw.entropy)
            entropy[position] ^= 0x01
            wrong = cw_new(bytes(entropy))
            pkt = _packet(period, fill=period % 256)
            assert descramble(wrong, scramble(cw, pkt)).payload != pkt.payload
