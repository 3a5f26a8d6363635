"""Privacy CA: AIK enrollment, validity queries, identity escrow and reveal."""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass, field

from src.common.errors import (
    BadAikBinding,
    BadEkCredential,
    ChallengeFailed,
    Unauthorized,
    UnknownIdentity,
    UnknownSession,
)
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import (
    KeyUsage,
    decrypt,
    digest,
    encrypt_to,
    generate_keypair,
    verify,
)
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    read_text,
    text,
)
from src.tpm_core.models import AikCredential, EkCredential, IdentityBinding, PlatformCredential
from src.tpm_core.tpm import challenge_response_input

from .models import EscrowRecord, FraudClaim, ProviderVouch, Status, ValidityResponse

logger = logging.getLogger(__name__)


@dataclass
class _PendingEnrollment:
    ek_credential: EkCredential
    binding: IdentityBinding
    customer_id: str
    nonce: bytes


@dataclass
class RevealEvent:
    identity_label: str
    claim_id: str
    at: int


@dataclass
class _Registry:
    status: dict[str, Status] = field(default_factory=dict)
    escrow: dict[str, EscrowRecord] = field(default_factory=dict)


class PrivacyCa(Endpoint):
    """Privacy CA (optionally also acting as the MNO identity provider).

    Args:
        name: Endpoint name on the network.
        rng: Seeded source for keys, labels and challenges.
        manufacturer_roots: manufacturer_id -> root public key accepted on EKCs.
        auditor_pub: Key that must sign fraud claims.
        auditor_enc_pub: Key reveal responses are encrypted to.
    """

    def __init__(
        self,
        name: str,
        rng: random.Random,
        manufacturer_roots: dict[str, bytes] | None = None,
        auditor_pub: bytes | None = None,
        auditor_enc_pub: bytes | None = None,
    ) -> None:
        super().__init__(name)
        self._rng = rng
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self._decrypt = generate_keypair(KeyUsage.DECRYPT, rng)
        self.manufacturer_roots = dict(manufacturer_roots or {})
        self.auditor_pub = auditor_pub
        self.auditor_enc_pub = auditor_enc_pub
        self._sessions: dict[bytes, _PendingEnrollment] = {}
        self._registry = _Registry()
        self.issued: Counter[str] = Counter()
        self.audit_log: list[RevealEvent] = []

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    @property
    def encryption_key(self) -> bytes:
        return self._decrypt.public

    # --- Message dispatch ---

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.ENROLL_REQUEST:
            return [self.reply(envelope, self._enroll_request(msg))]
        if msg.msg_type is MsgType.ENROLL_RESPONSE:
            blob = self._enroll_response(msg)
            self.issued[envelope.sender] += 1
            return [self.reply(envelope, blob)]
        if msg.msg_type is MsgType.VALIDITY_QUERY:
            msg.expect(MsgType.VALIDITY_QUERY, 2)
            response = self.validity_response(read_text(msg.field(0)), msg.field(1))
            return [self.reply(envelope, response.to_message())]
        if msg.msg_type is MsgType.REVEAL_REQUEST:
            customer_id = self.reveal_identity(FraudClaim.from_message(msg))
            ct = encrypt_to(self.auditor_enc_pub, text(customer_id), self._rng)
            return [self.reply(envelope, WireMessage(MsgType.REVEAL_RESPONSE, (ct,)))]
        return super().handle(envelope)

    # --- Enrollment ---

    def _enroll_request(self, msg: WireMessage) -> WireMessage:
        sealed = msg.expect(MsgType.ENROLL_REQUEST, 1).field(0)
        body = decode(decrypt(self._decrypt, sealed)).expect(MsgType.ENROLL_BODY, 4)
        ekc = EkCredential.from_bytes(body.field(0))
        platform = PlatformCredential.from_bytes(body.field(1))
        binding = IdentityBinding.from_bytes(body.field(2))
        customer_id = read_text(body.field(3))

        root = self.manufacturer_roots.get(ekc.manufacturer_id)
        if root is None or not ekc.verify(root):
            raise BadEkCredential(f"EKC from {ekc.manufacturer_id!r} does not verify")
        if not platform.verify(root) or platform.ek_digest != digest(ekc.ek_pub):
            raise BadEkCredential("platform credential does not match EKC")
        if not binding.verify():
            raise BadAikBinding(f"identity binding for {binding.label!r} does not verify")

        session_id = self._rng.randbytes(16)
        nonce = self._rng.randbytes(32)
        self._sessions[session_id] = _PendingEnrollment(ekc, binding, customer_id, nonce)
        challenge = encode(WireMessage(MsgType.CHALLENGE_BODY, (text(binding.label), nonce)))
        challenge_ct = encrypt_to(ekc.ek_enc_pub, challenge, self._rng)
        logger.info("%s: enrollment challenge issued for %s", self.name, binding.label)
        return WireMessage(MsgType.ENROLL_CHALLENGE, (session_id, challenge_ct))

    def _enroll_response(self, msg: WireMessage) -> WireMessage:
        msg.expect(MsgType.ENROLL_RESPONSE, 2)
        pending = self._sessions.pop(msg.field(0), None)
        if pending is None:
            raise UnknownSession("no open enrollment session")
        if not verify(pending.binding.aik_pub, challenge_response_input(pending.nonce), msg.field(1)):
            raise ChallengeFailed("challenge response does not verify under the AIK")

        credential = self._issue(pending)
        body = encode(WireMessage(MsgType.ACTIVATION_BODY, (
            text(pending.binding.label),
            digest(pending.binding.aik_pub),
            credential.to_bytes(),
        )))
        blob = encrypt_to(pending.ek_credential.ek_enc_pub, body, self._rng)
        return WireMessage(MsgType.ACTIVATION_BLOB, (blob,))

    def _issue(self, pending: _PendingEnrollment) -> AikCredential:
        label = f"id-{self._rng.randbytes(8).hex()}"
        unsigned = AikCredential(
            identity_label=label,
            aik_pub=pending.binding.aik_pub,
            manufacturer_id=pending.ek_credential.manufacturer_id,
            model=pending.ek_credential.model,
            issued_at=self.transport.now(),
        )
        credential = unsigned.signed_by(self._signing)
        self._registry.status[label] = Status.GOOD
        self._registry.escrow[label] = EscrowRecord(digest(pending.ek_credential.ek_pub), pending.customer_id)
        logger.info("%s: AIK credential %s issued", self.name, label)
        return credential

    # --- Validity ---

    def check_validity(self, identity_label: str) -> Status:
        return self._registry.status.get(identity_label, Status.UNKNOWN)

    def validity_response(self, identity_label: str, nonce: bytes) -> ValidityResponse:
        unsigned = ValidityResponse(identity_label, self.check_validity(identity_label), self.transport.now(), nonce)
        return unsigned.signed_by(self._signing)

    def revoke(self, identity_label: str) -> None:
        if identity_label not in self._registry.status:
            raise UnknownIdentity(identity_label)
        self._registry.status[identity_label] = Status.REVOKED
        logger.warning("%s: %s revoked", self.name, identity_label)

    # --- Escrow ---

    def reveal_identity(self, claim: FraudClaim) -> str:
        """Escrowed customer id for an auditor-authorized claim."""
        if self.auditor_pub is None or not claim.verify(self.auditor_pub):
            raise Unauthorized(f"reveal of {claim.identity_label} without a valid fraud claim")
        record = self._registry.escrow.get(claim.identity_label)
        if record is None:
            raise UnknownIdentity(claim.identity_label)
        self.audit_log.append(RevealEvent(claim.identity_label, claim.claim_id, self.transport.now()))
        logger.warning("%s: identity behind %s revealed (claim %s)", self.name, claim.identity_label, claim.claim_id)
        return record.customer_id

    def vouch(self, provider: str, provider_pub: bytes) -> ProviderVouch:
        """Sign a provider key so boxes without its root can still trust it."""
        unsigned = ProviderVouch(provider, provider_pub)
        return unsigned.signed_by(self._signing)
