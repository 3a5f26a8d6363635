"""Tests for the Privacy CA: enrollment, validity, revocation and escrow."""

import random

import pytest

from src.common.errors import (
    AlreadyOwned,
    EnrollmentFailed,
    RevokedCredential,
    Unauthorized,
    UnknownIdentity,
    UnknownSession,
)
from src.crypto_envelope.wire import MsgType, WireMessage, text
from src.pca_service.auditor import Auditor
from src.pca_service.models import Status, ValidityResponse
from src.provider_services.models import ChargingModel
from src.set_top_box.box import SetTopBox
from src.sim_harness.adversary import RelayTamper
from src.tpm_core.manufacturer import Manufacturer


class TestEnrollment:
    def test_credentials_issued(self, enrolled_world):
        pca = enrolled_world.pca
        labels = set()
        for name, box in enrolled_world.boxes.items():
            credential = box.state.credential
            assert credential.verify(pca.public_key)
            assert credential.aik_pub == box.tpm.state.aiks["aik-0"].public
            assert pca.check_validity(credential.identity_label) is Status.GOOD
            assert pca.issued[name] == 1
            labels.add(credential.identity_label)
        assert len(labels) == 2

    def test_credential_carries_no_identity(self, enrolled_world):
        box = enrolled_world.box("box-1")
        raw = box.state.credential.to_bytes()
        assert box.tpm.ek_credential.ek_pub not in raw
        assert box.customer_id.encode() not in raw

    def test_unknown_manufacturer_rejected(self, world, manifest):
        evil = Manufacturer("evil", random.Random("evil"))
        roots = world.box("box-1").roots
        box = SetTopBox("box-x", evil.manufacture_tpm("stb-100", random.Random(1)), manifest,
                        random.Random(2), "customer-x", roots)
        world.net.add(box)
        with pytest.raises(EnrollmentFailed, match="BadEkCredential"):
            box.take_ownership_online()
        assert box.identity_label is None
        assert sum(world.pca.issued.values()) == 0

    def test_unknown_session(self, world):
        box = world.box("box-1")
        with pytest.raises(UnknownSession):
            box.call("pca", WireMessage(MsgType.ENROLL_RESPONSE, (b"s" * 16, b"r" * 64)), MsgType.ACTIVATION_BLOB)

    def test_enrollment_through_relay(self, world):
        credential = world.box("box-1").take_ownership_online(via="phone")
        assert credential.verify(world.pca.public_key)
        assert world.pca.issued["phone"] == 1
        assert world.secondary_devices["phone"].relayed == 2
        assert all("box-1" not in (d.sender, d.receiver) or "pca" not in (d.sender, d.receiver)
                   for d in world.net.transcript)

    def test_retry_after_failed_enrollment(self, world):
        box = world.box("box-1")
        tamper = RelayTamper("phone")
        tamper.install(world.net)
        with pytest.raises(EnrollmentFailed, match="ChallengeFailed"):
            box.take_ownership_online(via="phone")
        world.net.run_until_quiet()
        assert box.identity_label is None
        aik_pub = box.state.identity_binding.aik_pub

        world.net.adversaries.remove(tamper)
        credential = box.take_ownership_online(via="phone")
        assert credential.verify(world.pca.public_key)
        assert credential.aik_pub == aik_pub
        assert box.register("vendor-1", 1, ChargingModel.PREPAID).identity_label == credential.identity_label

    def test_enrolled_box_cannot_take_ownership_twice(self, enrolled_world):
        with pytest.raises(AlreadyOwned):
            enrolled_world.box("box-1").take_ownership_online()

    def test_labels_are_deterministic(self):
        from tests.conftest import make_world

        labels = []
        for _ in range(2):
            world = make_world()
            labels.append(world.box("box-1").take_ownership_online().identity_label)
        assert labels[0] == labels[1]


class TestValidity:
    def test_query_answers_status(self, enrolled_world):
        label = enrolled_world.label_of("box-1")
        provider = enrolled_world.provider("vendor-1")
        reply = provider.call("pca", WireMessage(MsgType.VALIDITY_QUERY, (text(label), b"n" * 32)),
                              MsgType.VALIDITY_RESPONSE)
        response = ValidityResponse.from_message(reply)
        assert response.verify(enrolled_world.pca.public_key)
        assert response.status is Status.GOOD
        assert response.nonce == b"n" * 32

    def test_unknown_label(self, world):
        assert world.pca.check_validity("id-nobody") is Status.UNKNOWN

    def test_revoked_box_is_refused(self, enrolled_world):
        box = enrolled_world.box("box-1")
        enrolled_world.pca.revoke(box.identity_label)
        assert enrolled_world.pca.check_validity(box.identity_label) is Status.REVOKED
        with pytest.raises(RevokedCredential):
            box.register("vendor-1", 1, ChargingModel.PREPAID)

    def test_revoke_unknown(self, world):
        with pytest.raises(UnknownIdentity):
            world.pca.revoke("id-nobody")


class TestEscrow:
    def test_auditor_reveal(self, enrolled_world):
        label = enrolled_world.label_of("box-2")
        customer = enrolled_world.auditor.request_reveal("pca", label)
        assert customer == "customer-test-0002"
        assert enrolled_world.auditor.revealed == {label: customer}
        assert [e.identity_label for e in enrolled_world.pca.audit_log] == [label]

    def test_claim_from_other_auditor(self, enrolled_world):
        rogue = Auditor("rogue", random.Random("rogue"))
        claim = rogue.file_claim(enrolled_world.label_of("box-1"))
        with pytest.raises(Unauthorized):
            enrolled_world.pca.reveal_identity(claim)
        assert enrolled_world.pca.audit_log == []

    def test_reveal_unknown_label(self, enrolled_world):
        claim = enrolled_world.auditor.file_claim("id-nobody")
        with pytest.raises(UnknownIdentity):
            enrolled_world.pca.reveal_identity(claim)

    def test_transcript_never_carries_customer_id(self, enrolled_world):
        enrolled_world.auditor.request_reveal("pca", enrolled_world.label_of("box-1"))
        for delivery in enrolled_world.net.transcript:
            assert b"customer-test" not in delivery.payload


class TestVouch:
    def test_vouch_verifies_under_pca(self, world):
        vouch = world.pca.vouch("vendor-x", b"k" * 32)
        assert vouch.verify(world.pca.public_key)
        assert not vouch.verify(world.provider("vendor-1").public_key)
