"""Tests for measured boot: log replay and verifier verdicts."""

import random
from dataclasses import replace

import pytest

from src.common.errors import ConfigError, FixtureMissing, StateMismatch
from src.measured_boot.boot import VerdictReason, boot, expected_pcrs, replay, verify_log
from src.measured_boot.models import BootLog, BootManifest
from src.measured_boot.reference import ReferenceTable
from tests.conftest import OWNER_AUTH

NONCE = b"\x42" * 32


@pytest.fixture
def attested(booted_tpm):
    """A booted TPM with an active AIK, its quote and its log."""
    booted_tpm.make_identity(OWNER_AUTH, "aik-0")
    booted_tpm.state.activated.add("aik-0")
    return booted_tpm


def _quote(tpm):
    return tpm.quote("aik-0", (0, 1, 2, 3, 4), NONCE)


def _pristine_log(manifest) -> BootLog:
    from src.measured_boot.models import MeasurementEvent

    return BootLog(tuple(MeasurementEvent.measure(*image) for image in manifest.images))


class TestManifest:
    def test_fixture_loads(self, manifest):
        assert manifest.model == "stb-100"
        assert manifest.firmware_version == "1.0.0"
        assert [i.pcr_index for i in manifest.images] == [0, 1, 2, 3, 4]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FixtureMissing):
            BootManifest.from_yaml(tmp_path / "absent.yaml")

    def test_image_needs_content(self):
        with pytest.raises(ConfigError):
            BootManifest.from_dict({"model": "m", "firmware_version": "1", "images": [{"pcr": 0, "name": "x"}]})

    def test_replace_image(self, manifest):
        updated = manifest.replace_image("firmware", b"new", "2.0")
        assert updated.firmware_version == "2.0"
        assert [i.image for i in updated.images if i.name == "firmware"] == [b"new"]
        with pytest.raises(ConfigError):
            manifest.replace_image("nope", b"", "2.0")


class TestBoot:
    def test_boot_matches_expected(self, owned_tpm, manifest):
        log = boot(owned_tpm, manifest.images)
        assert len(log) == len(manifest.images)
        assert list(owned_tpm.state.pcrs) == expected_pcrs(manifest.images)
        assert replay(log) == list(owned_tpm.state.pcrs)

    def test_boot_needs_reset_pcrs(self, booted_tpm, manifest):
        with pytest.raises(StateMismatch):
            boot(booted_tpm, manifest.images)

    def test_log_encoding(self, owned_tpm, manifest):
        log = boot(owned_tpm, manifest.images)
        assert BootLog.from_bytes(log.to_bytes()) == log


class TestReference:
    def test_fixture_configurations(self, reference):
        assert "stb-100/1.0.0" in reference
        assert "stb-100/1.1.0" in reference

    def test_versions_differ_only_in_firmware_register(self, reference):
        v1 = reference.configurations["stb-100/1.0.0"]
        v2 = reference.configurations["stb-100/1.1.0"]
        assert [i for i in v1 if v1[i] != v2[i]] == [3]

    def test_direct_values(self, tmp_path):
        path = tmp_path / "ref.yaml"
        path.write_text("configurations:\n  - name: x\n    pcrs: {0: '" + "ab" * 32 + "'}\n")
        table = ReferenceTable.from_yaml(path)
        assert table.match({0: bytes.fromhex("ab" * 32)}) == "x"
        assert table.match({0: bytes(32)}) is None
        assert table.match({}) is None
        assert table.match({1: bytes.fromhex("ab" * 32)}) is None

    def test_entry_without_values(self, tmp_path):
        path = tmp_path / "ref.yaml"
        path.write_text("configurations:\n  - name: x\n")
        with pytest.raises(ConfigError):
            ReferenceTable.from_yaml(path)


class TestVerifyLog:
    def test_pristine_boot_trusted(self, attested, manifest, reference):
        verdict = verify_log(_pristine_log(manifest), reference, _quote(attested), NONCE)
        assert verdict.trusted
        assert verdict.configuration == "stb-100/1.0.0"
        assert str(verdict) == "Trusted(stb-100/1.0.0)"

    def test_stale_nonce(self, attested, manifest, reference):
        verdict = verify_log(_pristine_log(manifest), reference, _quote(attested), b"\x00" * 32)
        assert verdict.reason is VerdictReason.NONCE_MISMATCH

    def test_unknown_configuration(self, owned_tpm, manifest, reference):
        rogue = manifest.replace_image("kernel", b"patched kernel", "1.0.0")
        log = boot(owned_tpm, rogue.images)
        owned_tpm.make_identity(OWNER_AUTH, "aik-0")
        owned_tpm.state.activated.add("aik-0")
        verdict = verify_log(log, reference, _quote(owned_tpm), NONCE)
        assert verdict.reason is VerdictReason.UNKNOWN_CONFIGURATION

    @pytest.mark.parametrize("selection", [(), (0,), (0, 1), (0, 1, 3, 4), (2,)])
    def test_partial_quote_of_tampered_boot(self, owned_tpm, manifest, reference, selection):
        rogue = manifest.replace_image("kernel", b"patched kernel", "1.0.0")
        log = boot(owned_tpm, rogue.images)
        owned_tpm.make_identity(OWNER_AUTH, "aik-0")
        owned_tpm.state.activated.add("aik-0")
        verdict = verify_log(log, reference, owned_tpm.quote("aik-0", selection, NONCE), NONCE)
        assert not verdict.trusted
        assert verdict.reason is VerdictReason.UNKNOWN_CONFIGURATION

    def test_partial_quote_of_pristine_boot(self, attested, manifest, reference):
        quote = attested.quote("aik-0", (0, 1, 2, 3), NONCE)
        verdict = verify_log(_pristine_log(manifest), reference, quote, NONCE)
        assert verdict.reason is VerdictReason.UNKNOWN_CONFIGURATION

    def test_required_registers_can_be_narrowed(self, attested, manifest, reference):
        table = ReferenceTable({"bios-only": {0: attested.read_pcrs((0,))[0]}})
        quote = attested.quote("aik-0", (0,), NONCE)
        assert verify_log(_pristine_log(manifest), table, quote, NONCE, required_pcrs=(0,)).trusted
        assert not verify_log(_pristine_log(manifest), table, quote, NONCE).trusted

    def test_every_single_event_tamper_detected(self, attested, manifest, reference):
        log = _pristine_log(manifest)
        quote = _quote(attested)
        for i, event in enumerate(log.events):
            # image swapped, digest left alone
            swapped = replace(event, component_image=event.component_image + b"!")
            # image and digest swapped consistently
            remeasured = type(event).measure(event.pcr_index, event.component_name, event.component_image + b"!")
            dropped = log.events[:i] + log.events[i + 1:]
            for events in (
                log.events[:i] + (swapped,) + log.events[i + 1:],
                log.events[:i] + (remeasured,) + log.events[i + 1:],
                dropped,
            ):
                verdict = verify_log(BootLog(events), reference, quote, NONCE)
                assert not verdict.trusted
                assert verdict.reason is VerdictReason.LOG_MISMATCH

    def test_random_bit_flips_detected(self, attested, manifest, reference):
        rng = random.Random(2024)
        log = _pristine_log(manifest)
        quote = _quote(attested)
        for _ in range(1000):
            i = rng.randrange(len(log.events))
            event = log.events[i]
            target = rng.choice(["image", "digest", "pcr"])
            if target == "image":
                raw = bytearray(event.component_image)
                pos = rng.randrange(len(raw) * 8)
                raw[pos // 8] ^= 1 << (pos % 8)
                event = replace(event, component_image=bytes(raw))
            elif target == "digest":
                raw = bytearray(event.digest)
                pos = rng.randrange(len(raw) * 8)
                raw[pos // 8] ^= 1 << (pos % 8)
                event = replace(event, digest=bytes(raw))
            else:
                event = replace(event, pcr_index=event.pcr_index ^ (1 << rng.randrange(8)))
            events = log.events[:i] + (event,) + log.events[i + 1:]
            verdict = verify_log(BootLog(events), reference, quote, NONCE)
            assert not verdict.trusted, f"flip in event {i} ({target}) went unnoticed"
