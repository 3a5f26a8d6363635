"""Entitlement, constraint and permit models for the virtual CAM."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

from src.common.errors import MalformedConstraints
from src.crypto_envelope.signed import SignedMixin
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    read_text,
    read_uint,
    text,
    u8,
    u16,
    u32,
    u64,
)
from src.tpm_core.models import SealedBlob

SECONDS_PER_DAY = 86_400
SECONDS_PER_HOUR = 3_600


@dataclass(frozen=True)
class UsageConstraints:
    """Validity window ``[valid_from, valid_until)`` plus optional daily limits."""

    valid_from: int
    valid_until: int
    daily_max: int | None = None
    allowed_hours: frozenset[int] | None = None

    def __post_init__(self) -> None:
        if self.valid_from >= self.valid_until:
            raise MalformedConstraints("valid_from must precede valid_until")
        if self.daily_max is not None and self.daily_max <= 0:
            raise MalformedConstraints("daily_max must be positive")
        if self.allowed_hours is not None and not all(0 <= h < 24 for h in self.allowed_hours):
            raise MalformedConstraints("allowed_hours must be within 0..23")

    def to_bytes(self) -> bytes:
        fields = [u64(self.valid_from), u64(self.valid_until), u32(self.daily_max or 0)]
        if self.allowed_hours is not None:
            fields.append(bytes(sorted(self.allowed_hours)))
        return encode(WireMessage(MsgType.USAGE_CONSTRAINTS, tuple(fields)))

    @classmethod
    def from_bytes(cls, raw: bytes) -> UsageConstraints:
        msg = decode(raw).expect(MsgType.USAGE_CONSTRAINTS, 3)
        daily = read_uint(msg.field(2), 4)
        hours = frozenset(msg.field(3)) if len(msg.fields) > 3 else None
        return cls(read_uint(msg.field(0), 8), read_uint(msg.field(1), 8), daily or None, hours)


@dataclass(frozen=True)
class EntitlementCredential(SignedMixin):
    """Provider-signed entitlement; the secret travels encrypted to the box's bind key."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.ENTITLEMENT

    cas_id: str
    stream_id: int
    secret_ct: bytes
    constraints: UsageConstraints
    online_gated: bool
    issued_to: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [
            text(self.cas_id),
            u16(self.stream_id),
            self.secret_ct,
            self.constraints.to_bytes(),
            u8(int(self.online_gated)),
            text(self.issued_to),
        ]

    @classmethod
    def from_message(cls, msg: WireMessage) -> EntitlementCredential:
        msg = msg.expect(MsgType.ENTITLEMENT, 7)
        return cls(
            cas_id=read_text(msg.field(0)),
            stream_id=read_uint(msg.field(1), 2),
            secret_ct=msg.field(2),
            constraints=UsageConstraints.from_bytes(msg.field(3)),
            online_gated=bool(read_uint(msg.field(4), 1)),
            issued_to=read_text(msg.field(5)),
            signature=msg.field(6),
        )


@dataclass(frozen=True)
class OnlinePermit(SignedMixin):
    """Short-lived provider permission covering a range of crypto periods."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.ONLINE_PERMIT

    identity_label: str
    cas_id: str
    stream_id: int
    first_period: int
    last_period: int
    nonce: bytes
    expires_at: int
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [
            text(self.identity_label),
            text(self.cas_id),
            u16(self.stream_id),
            u32(self.first_period),
            u32(self.last_period),
            self.nonce,
            u64(self.expires_at),
        ]

    def covers(self, cas_id: str, stream_id: int, period_index: int, now: int) -> bool:
        return (
            self.cas_id == cas_id
            and self.stream_id == stream_id
            and self.first_period <= period_index <= self.last_period
            and now < self.expires_at
        )

    @classmethod
    def from_message(cls, msg: WireMessage) -> OnlinePermit:
        msg = msg.expect(MsgType.ONLINE_PERMIT, 8)
        return cls(
            identity_label=read_text(msg.field(0)),
            cas_id=read_text(msg.field(1)),
            stream_id=read_uint(msg.field(2), 2),
            first_period=read_uint(msg.field(3), 4),
            last_period=read_uint(msg.field(4), 4),
            nonce=msg.field(5),
            expires_at=read_uint(msg.field(6), 8),
            signature=msg.field(7),
        )


@dataclass
class InstalledEntitlement:
    """An entitlement as held by the CAM: the secret only as a sealed blob."""

    credential: EntitlementCredential
    sealed_secret: SealedBlob
    issuer_pub: bytes


@dataclass
class CasInstance:
    """One conditional access system housed in the box."""

    cas_id: str
    identity_label: str = ""
    entitlements: dict[int, InstalledEntitlement] = field(default_factory=dict)
    # (stream_id, day) -> successful periods
    usage_counters: dict[tuple[int, int], int] = field(default_factory=dict)
    cw_released: int = 0
    # PCR values the last successful attestation reported
    attested_pcrs: tuple[bytes, ...] | None = None

    def usage_on(self, stream_id: int, day: int) -> int:
        return self.usage_counters.get((stream_id, day), 0)
