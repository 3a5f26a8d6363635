"""Service provider (vendor): offers, registration, constrained keys, online permits."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from src.cas_engine.models import EntitlementCredential, OnlinePermit, UsageConstraints
from src.common.config import settings
from src.common.errors import (
    BadSelectionSignature,
    NotOnAcl,
    UnknownOffer,
    UnknownSubscriber,
)
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import KeyUsage, encrypt_to, generate_keypair
from src.crypto_envelope.wire import MsgType, WireMessage, read_uint
from src.measured_boot.reference import ReferenceTable
from src.stream_scrambler.control_word import SECRET_SIZE
from src.stream_scrambler.scrambler import HeadEnd, TransportPacket
from src.tpm_core.models import AikCredential

from .attestation import AttestationVerifier
from .models import (
    ChargingModel,
    RegistrationReceipt,
    ServiceEntry,
    ServiceOffer,
    SubscriptionSelection,
)

logger = logging.getLogger(__name__)


@dataclass
class Subscriber:
    identity_label: str
    aik_pub: bytes
    bind_pub: bytes
    stream_id: int
    charging_model: ChargingModel
    tariff: int


@dataclass
class _KeyRegistryEntry:
    identity_label: str
    stream_id: int
    constraints: UsageConstraints
    issued_at: int


@dataclass
class ProviderLedger:
    subscribers: dict[str, Subscriber] = field(default_factory=dict)
    acl: dict[int, set[str]] = field(default_factory=dict)
    key_registry: list[_KeyRegistryEntry] = field(default_factory=list)
    permits_issued: int = 0


class ServiceProvider(Endpoint):
    """Vendor V: sells streams, attests boxes and issues their entitlements.

    Also the head-end for its own streams: ``broadcast`` produces the clear and
    scrambled packets the boxes receive over the broadcast channel.
    """

    def __init__(
        self,
        name: str,
        rng: random.Random,
        pca: str,
        pca_pub: bytes,
        reference: ReferenceTable,
        services: list[ServiceEntry],
        tariffs: dict[ChargingModel, int],
        offer_id: str = "offer-1",
        content_seed: int | str = 0,
    ) -> None:
        super().__init__(name)
        self._rng = rng
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self.verifier = AttestationVerifier(self, pca, pca_pub, reference, rng)
        self.services = {s.stream_id: s for s in services}
        self.tariffs = dict(tariffs)
        self.offer_id = offer_id
        self.vouch = b""
        self.ledger = ProviderLedger()
        self._secrets = {sid: rng.randbytes(SECRET_SIZE) for sid in sorted(self.services)}
        self._head_ends = {sid: HeadEnd(sid, secret, content_seed) for sid, secret in self._secrets.items()}

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    # --- Dispatch ---

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.OFFER_REQUEST:
            return [self.reply(envelope, self.offer().to_message())]
        if msg.msg_type is MsgType.ATTEST_NONCE_REQUEST:
            return [self.reply(envelope, self.verifier.nonce_message())]
        if msg.msg_type is MsgType.REGISTRATION_REQUEST:
            return [self.reply(envelope, self.register(msg).to_message())]
        if msg.msg_type is MsgType.KEY_REQUEST:
            return [self.reply(envelope, self.issue_constrained_key(msg).to_message())]
        if msg.msg_type is MsgType.PERMIT_REQUEST:
            return [self.reply(envelope, self._permit_request(msg).to_message())]
        return super().handle(envelope)

    def offer(self) -> ServiceOffer:
        services = tuple(self.services[sid] for sid in sorted(self.services))
        tariffs = tuple(sorted(self.tariffs.items(), key=lambda kv: kv[0].value))
        return ServiceOffer(self.offer_id, self.name, services, tariffs, self.vouch).signed_by(self._signing)

    # --- Registration ---

    def register(self, msg: WireMessage) -> RegistrationReceipt:
        """Attest the box, check its signed selection, and enrol it as a subscriber."""
        msg = msg.expect(MsgType.REGISTRATION_REQUEST, 5)
        result = self.verifier.attest(msg.field(0), msg.field(1), msg.field(2))
        credential = result.credential

        selection = SubscriptionSelection.from_bytes(msg.field(3))
        if selection.identity_label != credential.identity_label or not selection.verify(credential.aik_pub):
            raise BadSelectionSignature(f"selection from {credential.identity_label}")
        if selection.offer_id != self.offer_id or selection.stream_id not in self.services:
            raise UnknownOffer(f"{selection.offer_id}/{selection.stream_id}")
        tariff = self.tariffs.get(selection.charging_model)
        if tariff is None:
            raise UnknownOffer(f"charging model {selection.charging_model.value} not offered")
        cert = self.verifier.check_bind_cert(msg.field(4), credential)

        self.ledger.subscribers[credential.identity_label] = Subscriber(
            credential.identity_label, credential.aik_pub, cert.bind_pub,
            selection.stream_id, selection.charging_model, tariff,
        )
        logger.info("%s: %s subscribed to stream %d (%s)",
                    self.name, credential.identity_label, selection.stream_id, selection.charging_model.value)
        receipt = RegistrationReceipt(
            credential.identity_label, self.offer_id, selection.stream_id,
            selection.charging_model, tariff, self.transport.now(),
        )
        return receipt.signed_by(self._signing)

    # --- Constrained keys ---

    def issue_constrained_key(self, msg: WireMessage) -> EntitlementCredential:
        """Attest first; only then encrypt the stream secret to the box's bind key."""
        msg = msg.expect(MsgType.KEY_REQUEST, 5)
        result = self.verifier.attest(msg.field(0), msg.field(1), msg.field(2))
        label = result.credential.identity_label
        subscriber = self.ledger.subscribers.get(label)
        if subscriber is None:
            raise UnknownSubscriber(label)
        stream_id = read_uint(msg.field(3), 2)
        service = self.services.get(stream_id)
        if service is None:
            raise UnknownOffer(f"stream {stream_id}")
        constraints = UsageConstraints.from_bytes(msg.field(4))

        credential = EntitlementCredential(
            cas_id=service.cas_id,
            stream_id=stream_id,
            secret_ct=encrypt_to(subscriber.bind_pub, self._secrets[stream_id], self._rng),
            constraints=constraints,
            online_gated=service.online_gated,
            issued_to=label,
        )
        credential = credential.signed_by(self._signing)
        self.ledger.key_registry.append(_KeyRegistryEntry(label, stream_id, constraints, self.transport.now()))
        logger.info("%s: constrained key for stream %d issued to %s", self.name, stream_id, label)
        return credential

    # --- Online permits ---

    def acl_grant(self, stream_id: int, identity_label: str) -> None:
        self.ledger.acl.setdefault(stream_id, set()).add(identity_label)

    def acl_revoke(self, stream_id: int, identity_label: str) -> None:
        self.ledger.acl.get(stream_id, set()).discard(identity_label)

    def _permit_request(self, msg: WireMessage) -> OnlinePermit:
        msg = msg.expect(MsgType.PERMIT_REQUEST, 5)
        credential = self.verifier.check_credential(msg.field(0))
        return self.grant_online_permit(
            credential,
            read_uint(msg.field(1), 2),
            read_uint(msg.field(2), 4),
            read_uint(msg.field(3), 4),
            msg.field(4),
        )

    def grant_online_permit(
        self,
        credential: AikCredential,
        stream_id: int,
        first_period: int,
        last_period: int,
        nonce: bytes,
    ) -> OnlinePermit:
        """Permit for a validated credential whose pseudonym is on the stream's ACL."""
        label = credential.identity_label
        if label not in self.ledger.acl.get(stream_id, set()):
            raise NotOnAcl(f"{label} not on ACL of stream {stream_id}")
        service = self.services[stream_id]
        permit = OnlinePermit(
            identity_label=label,
            cas_id=service.cas_id,
            stream_id=stream_id,
            first_period=first_period,
            last_period=last_period,
            nonce=nonce,
            expires_at=self.transport.now() + settings.services.permit_ttl_seconds,
        )
        self.ledger.permits_issued += 1
        return permit.signed_by(self._signing)

    # --- Head-end ---

    def broadcast(self, stream_id: int, packet_count: int, first_period: int = 0) -> tuple[
        list[TransportPacket], list[TransportPacket]
    ]:
        return self._head_ends[stream_id].broadcast(packet_count, first_period)
