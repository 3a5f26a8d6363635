"""Online time authority stamping consumption records."""

from __future__ import annotations

import logging
import random

from src.common.errors import MalformedMessage
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import DIGEST_SIZE, KeyUsage, generate_keypair
from src.crypto_envelope.wire import MsgType

from .models import TimestampToken

logger = logging.getLogger(__name__)


class TimeAuthority(Endpoint):
    def __init__(self, name: str, rng: random.Random) -> None:
        super().__init__(name)
        self._signing = generate_keypair(KeyUsage.SIGN, rng)
        self.issued = 0

    @property
    def public_key(self) -> bytes:
        return self._signing.public

    def handle(self, envelope: Envelope) -> list[Envelope]:
        msg = envelope.message
        if msg.msg_type is MsgType.TIMESTAMP_REQUEST:
            subject = msg.expect(MsgType.TIMESTAMP_REQUEST, 1).field(0)
            return [self.reply(envelope, self.timestamp(subject).to_message())]
        return super().handle(envelope)

    def timestamp(self, subject_digest: bytes) -> TimestampToken:
        """Token binding ``subject_digest`` to the current simulated time."""
        if len(subject_digest) != DIGEST_SIZE:
            raise MalformedMessage("timestamp subject must be a digest")
        self.issued += 1
        return TimestampToken(self.transport.now(), subject_digest).signed_by(self._signing)
