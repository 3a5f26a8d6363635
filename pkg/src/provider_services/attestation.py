"""Remote attestation as performed by head-end parties."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from src.common.errors import BadCredential, MalformedMessage, RevokedCredential, Untrusted
from src.common.messaging import Endpoint
from src.crypto_envelope.wire import MsgType, WireMessage, text
from src.measured_boot.boot import Verdict, VerdictReason, verify_log
from src.measured_boot.models import BootLog
from src.measured_boot.reference import ReferenceTable
from src.pca_service.models import Status, ValidityResponse
from src.tpm_core.models import AikCredential, BindKeyCert, Quote, verify_quote

logger = logging.getLogger(__name__)

NONCE_SIZE = 32


@dataclass(frozen=True)
class AttestationResult:
    credential: AikCredential
    quote: Quote
    verdict: Verdict


class AttestationVerifier:
    """Nonce issuer plus credential, quote and log checks for one verifier.

    Args:
        owner: Endpoint on whose behalf validity queries are sent.
        pca: Endpoint name of the Privacy CA.
        pca_pub: PCA signing key.
        reference: Known-good configurations this verifier accepts.
        rng: Seeded nonce source.
    """

    def __init__(
        self,
        owner: Endpoint,
        pca: str,
        pca_pub: bytes,
        reference: ReferenceTable,
        rng: random.Random,
    ) -> None:
        self.owner = owner
        self.pca = pca
        self.pca_pub = pca_pub
        self.reference = reference
        self._rng = rng
        self._outstanding: set[bytes] = set()
        self.verdicts: list[tuple[str, Verdict]] = []

    def issue_nonce(self) -> bytes:
        nonce = self._rng.randbytes(NONCE_SIZE)
        self._outstanding.add(nonce)
        return nonce

    def nonce_message(self) -> WireMessage:
        return WireMessage(MsgType.ATTEST_NONCE, (self.issue_nonce(),))

    def check_credential(self, raw_credential: bytes) -> AikCredential:
        """PCA signature plus an online validity query."""
        credential = AikCredential.from_bytes(raw_credential)
        if not credential.verify(self.pca_pub):
            raise BadCredential(f"AIK credential {credential.identity_label} not signed by the PCA")

        nonce = self._rng.randbytes(NONCE_SIZE)
        reply = self.owner.call(
            self.pca,
            WireMessage(MsgType.VALIDITY_QUERY, (text(credential.identity_label), nonce)),
            MsgType.VALIDITY_RESPONSE,
        )
        validity = ValidityResponse.from_message(reply)
        if not validity.verify(self.pca_pub) or validity.nonce != nonce:
            raise BadCredential("validity response does not verify")
        if validity.status is Status.REVOKED:
            raise RevokedCredential(credential.identity_label)
        if validity.status is not Status.GOOD:
            raise BadCredential(f"{credential.identity_label} unknown to the PCA")
        return credential

    def check_bind_cert(self, raw_cert: bytes, credential: AikCredential) -> BindKeyCert:
        cert = BindKeyCert.from_bytes(raw_cert)
        if cert.identity_label != credential.identity_label or not cert.verify(credential.aik_pub):
            raise BadCredential("bind key certificate does not verify under the AIK")
        return cert

    def attest(self, raw_credential: bytes, raw_quote: bytes, raw_log: bytes) -> AttestationResult:
        """Full attestation; raises Untrusted unless the verdict is Trusted."""
        credential = self.check_credential(raw_credential)
        quote = Quote.from_bytes(raw_quote)
        if not verify_quote(quote, credential.aik_pub):
            raise BadCredential("quote signature does not verify under the AIK")

        if quote.external_nonce in self._outstanding:
            self._outstanding.discard(quote.external_nonce)
            try:
                verdict = verify_log(BootLog.from_bytes(raw_log), self.reference, quote)
            except MalformedMessage:
                verdict = Verdict.untrusted(VerdictReason.LOG_MISMATCH)
        else:
            verdict = Verdict.untrusted(VerdictReason.NONCE_MISMATCH)

        self.verdicts.append((credential.identity_label, verdict))
        if not verdict.trusted:
            logger.warning("%s: attestation of %s: %s", self.owner.name, credential.identity_label, verdict)
            raise Untrusted(verdict.reason.value)
        logger.info("%s: attestation of %s: %s", self.owner.name, credential.identity_label, verdict)
        return AttestationResult(credential, quote, verdict)
