"""Auditor party that authorizes identity reveals in fraud cases."""

from __future__ import annotations

import logging
import random

from src.common.messaging import Endpoint
from src.crypto_envelope.primitives import KeyUsage, decrypt, generate_keypair
from src.crypto_envelope.wire import MsgType, read_text

from .models import FraudClaim

logger = logging.getLogger(__name__)


class Auditor(Endpoint):
    def __init__(self, name: str, rng: random.Random) -> None:
        super().__init__(name)
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self._decrypt = generate_keypair(KeyUsage.DECRYPT, rng)
        self.revealed: dict[str, str] = {}
        self._claims = 0

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    @property
    def encryption_key(self) -> bytes:
        return self._decrypt.public

    def file_claim(self, identity_label: str) -> FraudClaim:
        self._claims += 1
        unsigned = FraudClaim(identity_label, f"claim-{self._claims:04d}")
        return unsigned.signed_by(self._signing)

    def request_reveal(self, pca: str, identity_label: str) -> str:
        """Ask the PCA who is behind ``identity_label``."""
        claim = self.file_claim(identity_label)
        reply = self.call(pca, claim.to_message(), MsgType.REVEAL_RESPONSE)
        customer_id = read_text(decrypt(self._decrypt, reply.expect(MsgType.REVEAL_RESPONSE, 1).field(0)))
        self.revealed[identity_label] = customer_id
        logger.info("%s: %s resolved under %s", self.name, identity_label, claim.claim_id)
        return customer_id
