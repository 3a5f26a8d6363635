"""Head-end data models: offers, receipts, vouchers, records, invoices, updates."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar

from src.crypto_envelope.primitives import digest
from src.crypto_envelope.signed import SignedMixin
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    pack_list,
    read_text,
    read_uint,
    text,
    u16,
    u32,
    u64,
    unpack_list,
)


class ChargingModel(str, Enum):
    PREPAID = "Prepaid"
    POSTPAID = "Postpaid"
    CONSTRAINED_KEY = "ConstrainedKey"


@dataclass(frozen=True)
class ServiceEntry:
    stream_id: int
    description: str
    cas_id: str = "cas-main"
    online_gated: bool = False


@dataclass(frozen=True)
class ServiceOffer(SignedMixin):
    """Provider-signed list of services and charging models with tariffs."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.SERVICE_OFFER

    offer_id: str
    provider: str
    services: tuple[ServiceEntry, ...]
    tariffs: tuple[tuple[ChargingModel, int], ...]
    vouch: bytes = b""
    signature: bytes = b""

    def body(self) -> list[bytes]:
        services = pack_list([
            pack_list([u16(s.stream_id), text(s.description), text(s.cas_id), bytes([int(s.online_gated)])])
            for s in self.services
        ])
        tariffs = pack_list([pack_list([text(m.value), u32(t)]) for m, t in self.tariffs])
        return [text(self.offer_id), text(self.provider), services, tariffs, self.vouch]

    def tariff_for(self, model: ChargingModel) -> int | None:
        return dict(self.tariffs).get(model)

    def service(self, stream_id: int) -> ServiceEntry | None:
        return next((s for s in self.services if s.stream_id == stream_id), None)

    @classmethod
    def from_message(cls, msg: WireMessage) -> ServiceOffer:
        msg = msg.expect(MsgType.SERVICE_OFFER, 6)
        services = []
        for raw in unpack_list(msg.field(2)):
            sid, desc, cas_id, gated = unpack_list(raw)
            services.append(ServiceEntry(read_uint(sid, 2), read_text(desc), read_text(cas_id), gated == b"\x01"))
        tariffs = []
        for raw in unpack_list(msg.field(3)):
            model, tariff = unpack_list(raw)
            tariffs.append((ChargingModel(read_text(model)), read_uint(tariff, 4)))
        return cls(
            read_text(msg.field(0)), read_text(msg.field(1)), tuple(services), tuple(tariffs),
            msg.field(4), msg.field(5),
        )


@dataclass(frozen=True)
class SubscriptionSelection(SignedMixin):
    """The box's choice from an offer, signed with its AIK."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.SUBSCRIPTION_SELECTION

    offer_id: str
    stream_id: int
    charging_model: ChargingModel
    identity_label: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.offer_id), u16(self.stream_id), text(self.charging_model.value), text(self.identity_label)]

    @classmethod
    def from_bytes(cls, raw: bytes) -> SubscriptionSelection:
        msg = decode(raw).expect(MsgType.SUBSCRIPTION_SELECTION, 5)
        return cls(
            read_text(msg.field(0)), read_uint(msg.field(1), 2),
            ChargingModel(read_text(msg.field(2))), read_text(msg.field(3)), msg.field(4),
        )


@dataclass(frozen=True)
class RegistrationReceipt(SignedMixin):
    MSG_TYPE: ClassVar[MsgType] = MsgType.REGISTRATION_RECEIPT

    identity_label: str
    offer_id: str
    stream_id: int
    charging_model: ChargingModel
    tariff: int
    registered_at: int
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [
            text(self.identity_label), text(self.offer_id), u16(self.stream_id),
            text(self.charging_model.value), u32(self.tariff), u64(self.registered_at),
        ]

    @classmethod
    def from_message(cls, msg: WireMessage) -> RegistrationReceipt:
        msg = msg.expect(MsgType.REGISTRATION_RECEIPT, 7)
        return cls(
            read_text(msg.field(0)), read_text(msg.field(1)), read_uint(msg.field(2), 2),
            ChargingModel(read_text(msg.field(3))), read_uint(msg.field(4), 4),
            read_uint(msg.field(5), 8), msg.field(6),
        )


@dataclass(frozen=True)
class DepositVoucher(SignedMixin):
    """Charging-signed deposit increment; travels encrypted to the box's bind key."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.VOUCHER_BODY

    amount: int
    nonce: bytes
    beneficiary: str
    issued_at: int
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [u32(self.amount), self.nonce, text(self.beneficiary), u64(self.issued_at)]

    @classmethod
    def from_bytes(cls, raw: bytes) -> DepositVoucher:
        msg = decode(raw).expect(MsgType.VOUCHER_BODY, 5)
        return cls(
            read_uint(msg.field(0), 4), msg.field(1), read_text(msg.field(2)),
            read_uint(msg.field(3), 8), msg.field(4),
        )


@dataclass(frozen=True)
class TimestampToken(SignedMixin):
    MSG_TYPE: ClassVar[MsgType] = MsgType.TIMESTAMP_TOKEN

    time: int
    subject_digest: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [u64(self.time), self.subject_digest]

    def binds(self, subject_digest: bytes, authority_pub: bytes) -> bool:
        return self.subject_digest == subject_digest and self.verify(authority_pub)

    @classmethod
    def from_message(cls, msg: WireMessage) -> TimestampToken:
        msg = msg.expect(MsgType.TIMESTAMP_TOKEN, 3)
        return cls(read_uint(msg.field(0), 8), msg.field(1), msg.field(2))

    @classmethod
    def from_bytes(cls, raw: bytes) -> TimestampToken:
        return cls.from_message(decode(raw))


@dataclass(frozen=True)
class ConsumptionRecord(SignedMixin):
    """One metered crypto period. Only ever leaves the box encrypted."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.CONSUMPTION_RECORD

    record_nonce: bytes
    identity_label: str
    stream_id: int
    period_index: int
    units: int
    timestamp_token: bytes = b""
    signature: bytes = b""

    def metered_fields(self) -> list[bytes]:
        return [
            self.record_nonce, text(self.identity_label), u16(self.stream_id),
            u32(self.period_index), u32(self.units),
        ]

    def subject_digest(self) -> bytes:
        """What the time authority stamps."""
        return digest(encode(WireMessage(MsgType.CONSUMPTION_RECORD, tuple(self.metered_fields()))))

    def body(self) -> list[bytes]:
        return [*self.metered_fields(), self.timestamp_token]

    @classmethod
    def from_bytes(cls, raw: bytes) -> ConsumptionRecord:
        msg = decode(raw).expect(MsgType.CONSUMPTION_RECORD, 7)
        return cls(
            msg.field(0), read_text(msg.field(1)), read_uint(msg.field(2), 2),
            read_uint(msg.field(3), 4), read_uint(msg.field(4), 4), msg.field(5), msg.field(6),
        )


class PullScope(str, Enum):
    PENDING = "pending"
    ALL = "all"


@dataclass(frozen=True)
class PullRequest(SignedMixin):
    MSG_TYPE: ClassVar[MsgType] = MsgType.PULL_REQUEST

    charging: str
    nonce: bytes
    scope: PullScope = PullScope.PENDING
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.charging), self.nonce, text(self.scope.value)]

    @classmethod
    def from_message(cls, msg: WireMessage) -> PullRequest:
        msg = msg.expect(MsgType.PULL_REQUEST, 4)
        return cls(read_text(msg.field(0)), msg.field(1), PullScope(read_text(msg.field(2))), msg.field(3))


@dataclass
class Invoice:
    """Outcome of one settlement batch plus the cumulative per-identity totals."""

    accepted: int = 0
    rejects: list[tuple[str, str]] = field(default_factory=list)
    totals: dict[str, int] = field(default_factory=dict)

    def total(self, identity_label: str) -> int:
        return self.totals.get(identity_label, 0)

    def to_message(self) -> WireMessage:
        return WireMessage(MsgType.INVOICE, (
            u32(self.accepted),
            pack_list([pack_list([text(ref), text(reason)]) for ref, reason in self.rejects]),
            pack_list([pack_list([text(label), u64(units)]) for label, units in sorted(self.totals.items())]),
        ))

    @classmethod
    def from_message(cls, msg: WireMessage) -> Invoice:
        msg = msg.expect(MsgType.INVOICE, 3)
        rejects = [tuple(read_text(x) for x in unpack_list(raw)) for raw in unpack_list(msg.field(1))]
        totals = {}
        for raw in unpack_list(msg.field(2)):
            label, units = unpack_list(raw)
            totals[read_text(label)] = read_uint(units, 8)
        return cls(read_uint(msg.field(0), 4), rejects, totals)


@dataclass(frozen=True)
class Dddb(SignedMixin):
    """Device description data block sent with an update request."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.DDDB

    model: str
    hw_revision: str
    fw_version: str
    nonce: bytes
    identity_label: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.model), text(self.hw_revision), text(self.fw_version), self.nonce, text(self.identity_label)]

    @classmethod
    def from_bytes(cls, raw: bytes) -> Dddb:
        msg = decode(raw).expect(MsgType.DDDB, 6)
        return cls(
            read_text(msg.field(0)), read_text(msg.field(1)), read_text(msg.field(2)),
            msg.field(3), read_text(msg.field(4)), msg.field(5),
        )


@dataclass(frozen=True)
class UpdatePackage(SignedMixin):
    """Signed firmware image bound to the device's nonce."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.UPDATE_BODY

    component: str
    image: bytes
    nonce: bytes
    version: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.component), self.image, self.nonce, text(self.version)]

    @classmethod
    def from_bytes(cls, raw: bytes) -> UpdatePackage:
        msg = decode(raw).expect(MsgType.UPDATE_BODY, 5)
        return cls(read_text(msg.field(0)), msg.field(1), msg.field(2), read_text(msg.field(3)), msg.field(4))


@dataclass(frozen=True)
class FirmwareRelease:
    model: str
    version: str
    component: str
    image: bytes
