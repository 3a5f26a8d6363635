"""Privacy-CA data models."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import ClassVar

from src.crypto_envelope.signed import SignedMixin
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    read_text,
    read_uint,
    text,
    u64,
)
from src.tpm_core.models import AikCredential


class Status(str, Enum):
    GOOD = "Good"
    REVOKED = "Revoked"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class EscrowRecord:
    """Link from a pseudonym back to the platform and customer; PCA-internal."""

    ek_digest: bytes
    customer_id: str


@dataclass(frozen=True)
class ValidityResponse(SignedMixin):
    """Signed answer to a validity query."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.VALIDITY_RESPONSE

    identity_label: str
    status: Status
    checked_at: int
    nonce: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.identity_label), text(self.status.value), u64(self.checked_at), self.nonce]

    @classmethod
    def from_message(cls, msg: WireMessage) -> ValidityResponse:
        msg = msg.expect(MsgType.VALIDITY_RESPONSE, 5)
        return cls(
            identity_label=read_text(msg.field(0)),
            status=Status(read_text(msg.field(1))),
            checked_at=read_uint(msg.field(2), 8),
            nonce=msg.field(3),
            signature=msg.field(4),
        )


@dataclass(frozen=True)
class FraudClaim(SignedMixin):
    """Auditor-signed authorization to reveal who is behind a pseudonym."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.REVEAL_REQUEST

    identity_label: str
    claim_id: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.identity_label), text(self.claim_id)]

    @classmethod
    def from_message(cls, msg: WireMessage) -> FraudClaim:
        msg = msg.expect(MsgType.REVEAL_REQUEST, 2)
        signature = msg.field(2) if len(msg.fields) > 2 else b""
        return cls(read_text(msg.field(0)), read_text(msg.field(1)), signature)


@dataclass(frozen=True)
class ProviderVouch(SignedMixin):
    """MNO statement that a provider key is authentic."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.PROVIDER_VOUCH

    provider: str
    provider_pub: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.provider), self.provider_pub]

    @classmethod
    def from_bytes(cls, raw: bytes) -> ProviderVouch:
        msg = decode(raw).expect(MsgType.PROVIDER_VOUCH, 3)
        return cls(read_text(msg.field(0)), msg.field(1), msg.field(2))


__all__ = ["AikCredential", "EscrowRecord", "FraudClaim", "ProviderVouch", "Status", "ValidityResponse"]
