"""Tests for shared common modules: config, errors, messaging."""

import pytest
from pydantic import ValidationError

from src.common.config import CONFIG_DIR, Settings, settings
from src.common.errors import (
    ConfigError,
    DecryptFailure,
    RemoteError,
    ReplayDetected,
    StbError,
    UnsupportedMessage,
)
from src.common.logging import setup_logging
from src.common.messaging import Endpoint, Envelope, error_message, raise_if_error
from src.crypto_envelope.wire import MsgType, WireMessage, read_text, read_uint
from src.sim_harness.network import SimNetwork
from src.sim_harness.scenario import ProviderSpec


class TestSettings:
    def test_defaults_match_settings_yaml(self):
        assert settings.tpm.pcr_count == 16
        assert settings.tpm.owner_auth_bytes == 20
        assert settings.tpm.attest_pcrs == [0, 1, 2, 3, 4]
        assert settings.stream.packets_per_period == 100
        assert settings.stream.payload_bytes == 184
        assert settings.watermark.offset + settings.watermark.length == settings.stream.payload_bytes
        assert settings.services.permit_ttl_seconds == 3600
        assert settings.services.default_tariff == 1
        assert settings.crypto.signature_scheme == "ed25519"
        assert settings.crypto.encryption_scheme == "x25519-hkdf-aesgcm"

    def test_settings_file_exists(self):
        assert (CONFIG_DIR / "settings.yaml").exists()

    def test_seed_env_override(self, monkeypatch):
        monkeypatch.setenv("STB_SIM_SEED", "99")
        assert Settings.load().sim.default_seed == 99

    def test_invalid_section_rejected(self):
        with pytest.raises(Exception):
            Settings(stream={"packets_per_period": 0})

    @pytest.mark.parametrize("section", [
        {"signature_scheme": "rsa-1024"},
        {"encryption_scheme": "rsa-oaep"},
    ])
    def test_unsupported_scheme_rejected(self, section):
        with pytest.raises(ValidationError):
            Settings(crypto=section)

    def test_provider_tariff_default(self):
        spec = ProviderSpec(name="vendor", services=[{"stream_id": 1}])
        assert spec.tariffs == {"prepaid": settings.services.default_tariff}


class TestErrors:
    def test_code_is_class_name(self):
        assert ReplayDetected.code == "ReplayDetected"
        assert ReplayDetected("x").code == "ReplayDetected"

    def test_from_wire_rebuilds_same_class(self):
        err = StbError.from_wire("DecryptFailure", "bad tag")
        assert isinstance(err, DecryptFailure)
        assert err.detail == "bad tag"

    def test_unknown_code_becomes_remote_error(self):
        err = StbError.from_wire("NoSuchError", "?")
        assert isinstance(err, RemoteError)
        assert "NoSuchError" in err.detail

    def test_error_message_round_trip(self):
        msg = error_message(ReplayDetected("voucher"), MsgType.DEPOSIT_VOUCHER)
        assert read_text(msg.field(0)) == "ReplayDetected"
        assert read_uint(msg.field(2), 1) == MsgType.DEPOSIT_VOUCHER
        with pytest.raises(ReplayDetected):
            raise_if_error(msg)

    def test_non_error_passes_through(self):
        ack = WireMessage(MsgType.ACK)
        assert raise_if_error(ack) is ack


class _Echo(Endpoint):
    def handle(self, envelope: Envelope) -> list[Envelope]:
        if envelope.message.msg_type is MsgType.OFFER_REQUEST:
            return [self.reply(envelope, WireMessage(MsgType.ACK))]
        if envelope.message.msg_type is MsgType.CONTRACT_REQUEST:
            raise ConfigError("refused")
        return super().handle(envelope)


class TestEndpoint:
    @pytest.fixture
    def net(self) -> SimNetwork:
        net = SimNetwork(seed=1)
        net.add(_Echo("a"))
        net.add(_Echo("b"))
        return net

    def test_call_returns_reply(self, net):
        reply = net.endpoints["a"].call("b", WireMessage(MsgType.OFFER_REQUEST), MsgType.ACK)
        assert reply.msg_type is MsgType.ACK

    def test_handler_error_becomes_error_reply(self, net):
        with pytest.raises(ConfigError):
            net.endpoints["a"].call("b", WireMessage(MsgType.CONTRACT_REQUEST), MsgType.ACK)
        assert net.transcript[-1].msg_type is MsgType.ERROR

    def test_unsupported_message(self, net):
        with pytest.raises(UnsupportedMessage):
            net.endpoints["a"].call("b", WireMessage(MsgType.DDDB), MsgType.ACK)

    def test_unattached_endpoint(self):
        with pytest.raises(RuntimeError):
            _ = _Echo("loose").transport


class TestLogging:
    def test_setup_logging_idempotent(self):
        first = setup_logging(module_name="stb_sim_test")
        second = setup_logging(module_name="stb_sim_test")
        assert first is second
        assert len(first.handlers) == 1
