"""Charging provider: contracts, deposit vouchers and consumption settlement."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from src.common.errors import DecryptFailure, MalformedMessage, NoContract
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import KeyUsage, decrypt, digest, encrypt_to, generate_keypair
from src.crypto_envelope.wire import MsgType, WireMessage, read_uint, u32
from src.measured_boot.reference import ReferenceTable

from .attestation import AttestationVerifier
from .models import (
    ConsumptionRecord,
    DepositVoucher,
    Invoice,
    PullRequest,
    PullScope,
    TimestampToken,
)

logger = logging.getLogger(__name__)

# Settlement outcomes after which the box may drop its copy of a record.
_ACKABLE = frozenset({None, "DuplicateRecord"})


def record_ref(ciphertext: bytes) -> bytes:
    """Opaque handle for an encrypted record, safe to send in clear."""
    return digest(ciphertext)


@dataclass
class SettlementLedger:
    seen_nonces: set[bytes] = field(default_factory=set)
    totals: dict[str, int] = field(default_factory=dict)
    invoices: list[Invoice] = field(default_factory=list)
    voucher_nonces: list[bytes] = field(default_factory=list)


class ChargingProvider(Endpoint):
    """Charging provider (possibly the MNO).

    Args:
        name: Endpoint name.
        rng: Seeded source for keys and nonces.
        pca: Privacy CA endpoint name.
        pca_pub: PCA signing key.
        reference: Configurations accepted when attesting top-up requests.
        tsa_pub: Time authority key consumption records must be stamped with.
    """

    def __init__(
        self,
        name: str,
        rng: random.Random,
        pca: str,
        pca_pub: bytes,
        reference: ReferenceTable,
        tsa_pub: bytes,
    ) -> None:
        super().__init__(name)
        self._rng = rng
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self._decrypt = generate_keypair(KeyUsage.DECRYPT, rng)
        self.verifier = AttestationVerifier(self, pca, pca_pub, reference, rng)
        self.tsa_pub = tsa_pub
        self.contracts: dict[str, bytes] = {}
        self.ledger = SettlementLedger()

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    @property
    def encryption_key(self) -> bytes:
        return self._decrypt.public

    # --- Dispatch ---

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.ATTEST_NONCE_REQUEST:
            return [self.reply(envelope, self.verifier.nonce_message())]
        if msg.msg_type is MsgType.CONTRACT_REQUEST:
            credential = self.verifier.check_credential(msg.expect(MsgType.CONTRACT_REQUEST, 1).field(0))
            self.contracts[credential.identity_label] = credential.aik_pub
            logger.info("%s: contract opened for %s", self.name, credential.identity_label)
            return [self.reply(envelope, WireMessage(MsgType.ACK))]
        if msg.msg_type is MsgType.TOPUP_REQUEST:
            voucher_ct, amount = self.top_up(msg)
            return [
                Envelope(self.name, envelope.sender, WireMessage(MsgType.DEPOSIT_VOUCHER, (voucher_ct,))),
                self.reply(envelope, WireMessage(MsgType.VOUCHER_ISSUED, (u32(amount),))),
            ]
        if msg.msg_type is MsgType.CONSUMPTION_PUSH:
            acked: list[bytes] = []
            invoice = self.settle(list(msg.fields), acked)
            return [
                Envelope(self.name, envelope.sender, self._settle_ack(acked)),
                self.reply(envelope, invoice.to_message()),
            ]
        return super().handle(envelope)

    # --- Deposit ---

    def top_up(self, msg: WireMessage) -> tuple[bytes, int]:
        """Attest, check the contract, and return a voucher encrypted to the box."""
        msg = msg.expect(MsgType.TOPUP_REQUEST, 5)
        result = self.verifier.attest(msg.field(0), msg.field(1), msg.field(2))
        credential = result.credential
        if self.contracts.get(credential.identity_label) != credential.aik_pub:
            raise NoContract(credential.identity_label)
        cert = self.verifier.check_bind_cert(msg.field(3), credential)
        amount = read_uint(msg.field(4), 4)

        nonce = self._rng.randbytes(32)
        voucher = DepositVoucher(amount, nonce, credential.identity_label, self.transport.now())
        voucher = voucher.signed_by(self._signing)
        self.ledger.voucher_nonces.append(nonce)
        logger.info("%s: voucher of %d issued to %s", self.name, amount, credential.identity_label)
        return encrypt_to(cert.bind_pub, voucher.to_bytes(), self._rng), amount

    # --- Settlement ---

    def settle(self, batch: list[bytes], acked: list[bytes] | None = None) -> Invoice:
        """Decrypt and check each record; duplicates and bad records are rejected, not fatal.

        Refs of records the box may forget (accepted or already settled) are
        appended to ``acked``; every other reject stays with the box for a retry.
        """
        invoice = Invoice()
        for ct in batch:
            reason = self._settle_one(ct)
            if acked is not None and reason in _ACKABLE:
                acked.append(record_ref(ct))
            if reason is None:
                invoice.accepted += 1
            else:
                invoice.rejects.append((record_ref(ct).hex()[:16], reason))
        invoice.totals = dict(self.ledger.totals)
        self.ledger.invoices.append(invoice)
        logger.info("%s: settled %d records, %d rejected", self.name, invoice.accepted, len(invoice.rejects))
        return invoice

    def _settle_one(self, ct: bytes) -> str | None:
        try:
            record = ConsumptionRecord.from_bytes(decrypt(self._decrypt, ct))
        except (DecryptFailure, MalformedMessage):
            return "Undecryptable"
        if record.record_nonce in self.ledger.seen_nonces:
            return "DuplicateRecord"
        aik_pub = self.contracts.get(record.identity_label)
        if aik_pub is None:
            return "NoContract"
        try:
            token = TimestampToken.from_bytes(record.timestamp_token)
        except MalformedMessage:
            return "BadTimestamp"
        if not token.binds(record.subject_digest(), self.tsa_pub):
            return "BadTimestamp"
        if not record.verify(aik_pub):
            return "BadSignature"
        self.ledger.seen_nonces.add(record.record_nonce)
        self.ledger.totals[record.identity_label] = self.ledger.totals.get(record.identity_label, 0) + record.units
        return None

    def _settle_ack(self, refs: list[bytes]) -> WireMessage:
        return WireMessage(MsgType.SETTLE_ACK, tuple(refs))

    def pull(self, box: str, scope: PullScope = PullScope.PENDING) -> Invoice:
        """Signed pull request to ``box``; the returned records are settled."""
        request = PullRequest(self.name, self._rng.randbytes(32), scope).signed_by(self._signing)
        batch = self.call(box, request.to_message(), MsgType.CONSUMPTION_BATCH)
        acked: list[bytes] = []
        invoice = self.settle(list(batch.fields), acked)
        self.transport.send(Envelope(self.name, box, self._settle_ack(acked)))
        return invoice

    def total_for(self, identity_label: str) -> int:
        return self.ledger.totals.get(identity_label, 0)
