"""Secondary device (e.g. a phone) relaying enrollment for a box without uplink."""

from __future__ import annotations

import logging

from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.wire import MsgType

logger = logging.getLogger(__name__)

_RELAYED = {
    MsgType.ENROLL_REQUEST: MsgType.ENROLL_CHALLENGE,
    MsgType.ENROLL_RESPONSE: MsgType.ACTIVATION_BLOB,
}


class SecondaryDevice(Endpoint):
    """Forwards enrollment traffic between a box and the PCA in both directions."""

    def __init__(self, name: str, pca: str) -> None:
        super().__init__(name)
        self.pca = pca
        self.relayed = 0

    def handle(self, envelope: Envelope) -> list[Envelope]:
        expect = _RELAYED.get(envelope.message.msg_type)
        if expect is None:
            return super().handle(envelope)
        # ERROR replies are relayed unchanged.
        answer = self.transport.call(self.name, self.pca, envelope.message, expect)
        self.relayed += 1
        logger.debug("%s relayed %s for %s", self.name, envelope.message.msg_type.name, envelope.sender)
        return [self.reply(envelope, answer)]
