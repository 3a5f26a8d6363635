"""Tests for the set-top box: playback, deposit, vouchers, updates and transfers."""

import random

import pytest

from src.common.config import settings
from src.common.errors import (
    BadChargingSignature,
    BadProviderSignature,
    BadPullRequestSignature,
    BadUpdateSignature,
    ConfigError,
    DepositExhausted,
    NonceMismatch,
    NotForThisDevice,
    ReplayDetected,
    StateMismatch,
)
from src.crypto_envelope.primitives import KeyUsage, encrypt_to, generate_keypair
from src.crypto_envelope.wire import MsgType, decode
from src.provider_services.models import (
    ChargingModel,
    Dddb,
    DepositVoucher,
    PullRequest,
    PullScope,
    UpdatePackage,
)
from src.set_top_box.box import TransferMode
from src.sim_harness.runner import build_world
from src.sim_harness.scenario import ScenarioConfig
from tests.conftest import day_constraints, scenario_dict, subscribe

OFFSET = settings.watermark.offset
SIZE = settings.stream.payload_bytes


def _pushed(world, msg_type: MsgType) -> bytes:
    """Ciphertext of the last pushed voucher or update package."""
    delivery = [d for d in world.net.transcript if d.msg_type is msg_type][-1]
    return decode(delivery.payload).field(0)


class TestPlayback:
    def test_prepaid_watch(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        originals, scrambled = enrolled_world.provider("vendor-1").broadcast(1, 250)
        result = box.watch("vendor-1", 1, scrambled)
        assert result.periods == 3
        assert result.charged == 6
        assert box.deposit == 94
        assert box.state.cas_instances["cas-main"].cw_released == 3

        tag = box.watermark_tag(1)
        for i, original in enumerate(originals):
            chunk = result.output[i * SIZE:(i + 1) * SIZE]
            assert chunk[:OFFSET] == original.payload[:OFFSET]
            assert chunk[OFFSET:OFFSET + len(tag)] == tag

    def test_watermarks_differ_per_box(self, enrolled_world):
        a = enrolled_world.box("box-1").watermark_tag(1)
        b = enrolled_world.box("box-2").watermark_tag(1)
        assert a != b
        assert len(a) == settings.watermark.length

    def test_deposit_runs_out_mid_stream(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        _, scrambled = enrolled_world.provider("vendor-1").broadcast(1, 51 * 100)
        with pytest.raises(DepositExhausted) as excinfo:
            box.watch("vendor-1", 1, scrambled)
        assert excinfo.value.periods_played == 50
        assert len(excinfo.value.output) == 50 * 100 * SIZE
        assert box.deposit == 0
        assert box.state.prepaid_charged == 100

    def test_reboot_keeps_entitlement(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        box.reboot()
        box.request_cw_from("cas-main", 1, 0)

    def test_tamper_breaks_sealed_secret(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        box.tamper_boot("cas_module")
        with pytest.raises(StateMismatch):
            box.request_cw_from("cas-main", 1, 0)

    def test_tamper_unknown_component(self, world):
        with pytest.raises(ConfigError):
            world.box("box-1").tamper_boot("gpu")


class TestVouchers:
    @pytest.fixture
    def topped_up(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.open_contract("mno")
        box.top_up("mno", 25)
        return enrolled_world

    def test_voucher_applied_once(self, topped_up):
        box = topped_up.box("box-1")
        assert box.deposit == 125
        with pytest.raises(ReplayDetected):
            box.apply_top_up(_pushed(topped_up, MsgType.DEPOSIT_VOUCHER), "mno")
        assert box.deposit == 125
        assert box.state.voucher_total == 25

    def test_replay_survives_reboot(self, topped_up):
        box = topped_up.box("box-1")
        box.reboot()
        with pytest.raises(ReplayDetected):
            box.apply_top_up(_pushed(topped_up, MsgType.DEPOSIT_VOUCHER), "mno")

    def test_voucher_for_other_box(self, topped_up):
        other = topped_up.box("box-2")
        other.certify_bind_key()
        with pytest.raises(NotForThisDevice):
            other.apply_top_up(_pushed(topped_up, MsgType.DEPOSIT_VOUCHER), "mno")
        assert other.deposit == 100

    def test_forged_voucher(self, topped_up):
        box = topped_up.box("box-1")
        forger = generate_keypair(KeyUsage.SIGN, random.Random("forger"))
        voucher = DepositVoucher(1000, b"f" * 32, box.identity_label, 0).signed_by(forger)
        ct = encrypt_to(box.state.bind_cert.bind_pub, voucher.to_bytes(), random.Random(1))
        with pytest.raises(BadChargingSignature):
            box.apply_top_up(ct, "mno")
        assert box.deposit == 125


class TestFirmwareUpdate:
    def test_update_reboots_into_new_firmware(self, enrolled_world):
        box = enrolled_world.box("box-1")
        before = box.tpm.read_pcrs([3])
        box.request_update("updates")
        assert box.firmware_version == "1.1.0"
        assert box.tpm.read_pcrs([3]) != before
        assert box.state.pending_update_nonce is None

    def test_update_invalidates_then_reprovision(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        box.request_update("updates")
        with pytest.raises(StateMismatch):
            box.request_cw_from("cas-main", 1, 0)
        box.request_entitlement("vendor-1", 1, day_constraints(enrolled_world))
        box.request_cw_from("cas-main", 1, 0)

    def test_replayed_package(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.request_update("updates")
        with pytest.raises(NonceMismatch):
            box.apply_update(_pushed(enrolled_world, MsgType.UPDATE_PACKAGE), "updates")
        assert box.firmware_version == "1.1.0"

    def test_mismatched_package_does_not_burn_its_nonce(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.certify_bind_key()
        service = enrolled_world.update_services["updates"]
        box.state.pending_update_nonce = b"n" * 32

        dddb = Dddb("stb-100", "A", "1.0.0", b"m" * 32, box.identity_label)
        stray = encrypt_to(box.state.bind_cert.bind_pub, service.build_update(b"m" * 32, dddb).to_bytes(), random.Random(1))
        with pytest.raises(NonceMismatch):
            box.apply_update(stray, "updates")
        assert b"m" * 32 not in box.tpm.state.nonce_cache
        assert box.state.pending_update_nonce == b"n" * 32

        dddb = Dddb("stb-100", "A", "1.0.0", b"n" * 32, box.identity_label)
        genuine = encrypt_to(box.state.bind_cert.bind_pub, service.build_update(b"n" * 32, dddb).to_bytes(), random.Random(2))
        box.apply_update(genuine, "updates")
        assert box.firmware_version == "1.1.0"
        with pytest.raises(NonceMismatch):
            box.apply_update(genuine, "updates", expected_nonce=b"n" * 32)

    def test_unrequested_package(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.certify_bind_key()
        service = enrolled_world.update_services["updates"]
        dddb = Dddb("stb-100", "A", "1.0.0", b"u" * 32, box.identity_label)
        package = service.build_update(b"u" * 32, dddb)
        ct = encrypt_to(box.state.bind_cert.bind_pub, package.to_bytes(), random.Random(1))
        with pytest.raises(NonceMismatch):
            box.apply_update(ct, "updates")
        assert box.firmware_version == "1.0.0"

    def test_forged_package(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.certify_bind_key()
        forger = generate_keypair(KeyUsage.SIGN, random.Random("forger"))
        package = UpdatePackage("firmware", b"evil", b"u" * 32, "6.6.6").signed_by(forger)
        ct = encrypt_to(box.state.bind_cert.bind_pub, package.to_bytes(), random.Random(1))
        with pytest.raises(BadUpdateSignature):
            box.apply_update(ct, "updates", expected_nonce=b"u" * 32)
        assert box.firmware_version == "1.0.0"


class TestConsumptionTransfer:
    def test_forged_pull_request(self, enrolled_world):
        box = enrolled_world.box("box-1")
        forger = generate_keypair(KeyUsage.SIGN, random.Random("forger"))
        request = PullRequest("mno", b"p" * 32, PullScope.ALL).signed_by(forger)
        with pytest.raises(BadPullRequestSignature):
            box.transfer_consumption("mno", TransferMode.PULL, request)

    def test_pull_without_request(self, enrolled_world):
        with pytest.raises(BadPullRequestSignature):
            enrolled_world.box("box-1").transfer_consumption("mno", TransferMode.PULL)

    def test_unacked_records_are_resent(self, enrolled_world):
        box = enrolled_world.box("box-1")
        box.open_contract("mno")
        subscribe(enrolled_world, model=ChargingModel.POSTPAID)
        _, scrambled = enrolled_world.provider("vendor-1").broadcast(1, 100)
        box.watch("vendor-1", 1, scrambled)
        assert len(box.state.consumption_log) == 1
        assert not box.state.consumption_log[0].acked
        invoice = box.transfer_consumption("mno")
        assert invoice.accepted == 1
        assert box.state.consumption_log[0].acked

    def test_records_rejected_before_contract_are_retried(self, enrolled_world):
        box = enrolled_world.box("box-1")
        charging = enrolled_world.charging_provider("mno")
        subscribe(enrolled_world, model=ChargingModel.POSTPAID)
        _, scrambled = enrolled_world.provider("vendor-1").broadcast(1, 300)
        box.watch("vendor-1", 1, scrambled)
        assert box.state.metered_units == 9

        first = box.transfer_consumption("mno")
        assert first.accepted == 0
        assert [reason for _, reason in first.rejects] == ["NoContract"] * 3
        assert not any(r.acked for r in box.state.consumption_log)

        box.open_contract("mno")
        second = box.transfer_consumption("mno")
        assert second.accepted == 3
        assert all(r.acked for r in box.state.consumption_log)
        assert charging.total_for(box.identity_label) == box.state.metered_units == 9

    def test_duplicates_are_acked(self, enrolled_world):
        box = enrolled_world.box("box-1")
        charging = enrolled_world.charging_provider("mno")
        box.open_contract("mno")
        subscribe(enrolled_world, model=ChargingModel.POSTPAID)
        _, scrambled = enrolled_world.provider("vendor-1").broadcast(1, 100)
        box.watch("vendor-1", 1, scrambled)
        record = box.state.consumption_log[0]
        assert charging.settle([record.ciphertext]).accepted == 1
        assert not record.acked
        invoice = box.transfer_consumption("mno")
        assert invoice.rejects[0][1] == "DuplicateRecord"
        assert record.acked
        assert charging.total_for(box.identity_label) == 3


class TestProviderTrust:
    @staticmethod
    def _vouched_world():
        data = scenario_dict()
        data["endpoints"]["providers"][0]["vouched"] = True
        world = build_world(ScenarioConfig.from_dict(data))
        world.box("box-1").take_ownership_online()
        return world

    def test_vouched_provider_accepted(self):
        world = self._vouched_world()
        box = world.box("box-1")
        assert "vendor-1" not in box.roots.providers
        assert box.register("vendor-1", 1, ChargingModel.PREPAID).tariff == 2

    def test_unvouched_unknown_provider_refused(self):
        world = self._vouched_world()
        world.provider("vendor-1").vouch = b""
        with pytest.raises(BadProviderSignature):
            world.box("box-1").register("vendor-1", 1, ChargingModel.PREPAID)

    def test_no_endorsement_key_on_provider_links(self, enrolled_world):
        subscribe(enrolled_world)
        box = enrolled_world.box("box-1")
        ek_pub = box.tpm.ek_credential.ek_pub
        for d in enrolled_world.net.transcript:
            if "vendor-1" in (d.sender, d.receiver):
                assert ek_pub not in d.payload
