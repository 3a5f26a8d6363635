"""Endpoint plumbing shared by every protocol party.

Parties never talk to each other directly: they hand ``Envelope``s to a
``Transport`` (the simulated network) and react to the envelopes it delivers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

from src.common.errors import StbError, UnsupportedMessage
from src.crypto_envelope.wire import MsgType, WireMessage, read_text, text, u8

logger = logging.getLogger(__name__)

# Replies collected into the caller's inbox instead of being dispatched.
RESPONSE_TYPES: frozenset[MsgType] = frozenset({
    MsgType.ENROLL_CHALLENGE,
    MsgType.ACTIVATION_BLOB,
    MsgType.VALIDITY_RESPONSE,
    MsgType.REVEAL_RESPONSE,
    MsgType.SERVICE_OFFER,
    MsgType.ATTEST_NONCE,
    MsgType.REGISTRATION_RECEIPT,
    MsgType.ENTITLEMENT,
    MsgType.ONLINE_PERMIT,
    MsgType.VOUCHER_ISSUED,
    MsgType.TIMESTAMP_TOKEN,
    MsgType.CONSUMPTION_BATCH,
    MsgType.INVOICE,
    MsgType.ACK,
    MsgType.ERROR,
})


@dataclass(frozen=True)
class Envelope:
    """One message in flight between two named endpoints."""

    sender: str
    receiver: str
    message: WireMessage


class Transport(Protocol):
    """What a party needs from the network."""

    def now(self) -> int: ...

    def send(self, envelope: Envelope) -> None: ...

    def call(
        self,
        sender: str,
        receiver: str,
        message: WireMessage,
        expect: MsgType,
    ) -> WireMessage: ...


def error_message(err: StbError, request_type: MsgType) -> WireMessage:
    """ERROR reply for a failed request."""
    return WireMessage(MsgType.ERROR, (text(err.code), text(err.detail), u8(int(request_type))))


def raise_if_error(message: WireMessage) -> WireMessage:
    """Turn an ERROR reply back into the exception that caused it."""
    if message.msg_type is MsgType.ERROR:
        code = read_text(message.field(0))
        detail = read_text(message.field(1)) if len(message.fields) > 1 else ""
        raise StbError.from_wire(code, detail)
    return message


class Endpoint:
    """Base class for a named party attached to a transport."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.inbox: list[Envelope] = []
        self._transport: Transport | None = None

    @property
    def transport(self) -> Transport:
        if self._transport is None:
            raise RuntimeError(f"endpoint {self.name} is not attached to a network")
        return self._transport

    def attach(self, transport: Transport) -> None:
        self._transport = transport

    def receive(self, envelope: Envelope) -> list[Envelope]:
        """Entry point used by the network for every delivered envelope."""
        if envelope.message.msg_type in RESPONSE_TYPES:
            self.inbox.append(envelope)
            return []
        try:
            replies = self.handle(envelope)
        except StbError as err:
            logger.warning(
                "%s rejected %s from %s: %s",
                self.name, envelope.message.msg_type.name, envelope.sender, err.code,
            )
            replies = [self.reply(envelope, error_message(err, envelope.message.msg_type))]
        return replies

    def handle(self, envelope: Envelope) -> list[Envelope]:
        """Process a request; override in parties."""
        raise UnsupportedMessage(envelope.message.msg_type.name)

    def reply(self, envelope: Envelope, message: WireMessage) -> Envelope:
        return Envelope(self.name, envelope.sender, message)

    def call(self, receiver: str, message: WireMessage, expect: MsgType) -> WireMessage:
        """Request/response round trip; ERROR replies are raised."""
        return raise_if_error(self.transport.call(self.name, receiver, message, expect))
