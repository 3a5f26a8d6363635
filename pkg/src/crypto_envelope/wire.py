"""Canonical TLV wire format.

Layout: ``msg_type`` (1 byte) followed by zero or more fields, each a 4-byte
big-endian length and that many bytes. Field order is fixed per message type
and documented next to each type below. Signatures always cover
``signing_input`` of the message with its signature field left out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from src.common.errors import MalformedMessage

_LEN = struct.Struct(">I")


class MsgType(IntEnum):
    """Every message type that may appear on the wire or in a fixture."""

    # tpm_core / measured_boot structures
    EK_CREDENTIAL = 0x01          # ek_pub, ek_enc_pub, manufacturer_id, model, sig
    PLATFORM_CREDENTIAL = 0x02    # manufacturer_id, model, ek digest, sig
    IDENTITY_BINDING = 0x03       # label, aik_pub, sig
    QUOTE = 0x04                  # selection, values, nonce, sig
    SEALED_BLOB = 0x05            # selection, values, tpm_id, ciphertext, tag
    MEASUREMENT_EVENT = 0x06      # pcr_index, name, image, digest
    BOOT_LOG = 0x07               # one encoded MEASUREMENT_EVENT per field
    BIND_KEY_CERT = 0x08          # identity_label, bind_pub, sig
    TPM_SNAPSHOT = 0x09
    TPM_PRIVATE_SECTION = 0x0A    # never carried by the network

    # stream_scrambler / cas_engine
    TRANSPORT_PACKET = 0x10       # stream_id, period_index, scrambled, payload
    USAGE_CONSTRAINTS = 0x11      # valid_from, valid_until, daily_max, hours
    ENTITLEMENT = 0x12            # cas_id, stream_id, secret_ct, constraints, gated, issued_to, sig
    ONLINE_PERMIT = 0x13          # label, cas_id, stream, first, last, nonce, expires, sig
    PERMIT_REQUEST = 0x14

    # pca_service
    ENROLL_REQUEST = 0x20         # sealed body for the PCA
    ENROLL_BODY = 0x21            # ekc, platform cred, binding, customer_id, reply_to
    ENROLL_CHALLENGE = 0x22       # session_id, challenge_ct
    CHALLENGE_BODY = 0x23         # label, nonce
    ENROLL_RESPONSE = 0x24        # session_id, aik signature over nonce
    ACTIVATION_BLOB = 0x25        # ciphertext to the EK-linked key
    ACTIVATION_BODY = 0x26        # tpm label, aik_pub digest, credential
    AIK_CREDENTIAL = 0x27         # identity_label, aik_pub, manufacturer, model, issued_at, sig
    VALIDITY_QUERY = 0x28         # identity_label, nonce
    VALIDITY_RESPONSE = 0x29      # identity_label, status, time, nonce, sig
    REVEAL_REQUEST = 0x2A         # identity_label, claim_id, sig
    REVEAL_RESPONSE = 0x2B        # ciphertext to the auditor
    PROVIDER_VOUCH = 0x2C         # provider name, provider pub, sig

    # provider_services
    OFFER_REQUEST = 0x30
    SERVICE_OFFER = 0x31          # offer_id, provider, services, models, vouch, sig
    ATTEST_NONCE_REQUEST = 0x32
    ATTEST_NONCE = 0x33
    SUBSCRIPTION_SELECTION = 0x34  # offer_id, stream_id, model, identity_label, sig
    REGISTRATION_REQUEST = 0x35   # aik_cred, quote, boot_log, selection, bind_cert
    REGISTRATION_RECEIPT = 0x36   # label, offer_id, stream_id, model, tariff, time, sig
    KEY_REQUEST = 0x37            # aik_cred, quote, boot_log, stream_id, constraints
    CONTRACT_REQUEST = 0x38       # aik_cred
    TOPUP_REQUEST = 0x39          # aik_cred, quote, boot_log, bind_cert, amount
    VOUCHER_ISSUED = 0x3A
    DEPOSIT_VOUCHER = 0x3B        # ciphertext to the bind key
    VOUCHER_BODY = 0x3C           # amount, nonce, beneficiary, issued_at, sig
    TIMESTAMP_REQUEST = 0x3D      # subject digest
    TIMESTAMP_TOKEN = 0x3E        # time, subject digest, sig
    CONSUMPTION_RECORD = 0x3F     # plaintext; never carried by the network
    CONSUMPTION_PUSH = 0x40       # record ciphertexts
    PULL_REQUEST = 0x41           # charging name, nonce, scope, sig
    CONSUMPTION_BATCH = 0x42      # record ciphertexts (pull reply)
    INVOICE = 0x43                # accepted, rejects, per-identity totals
    SETTLE_ACK = 0x44             # acknowledged record nonces
    DDDB = 0x45                   # model, hw_revision, fw_version, nonce, label, sig
    UPDATE_REQUEST = 0x46         # aik_cred, bind_cert, dddb
    UPDATE_PACKAGE = 0x47         # ciphertext to the bind key
    UPDATE_BODY = 0x48            # component, image, nonce, version, sig

    # generic
    ACK = 0x70
    ERROR = 0x71                  # code, detail, request msg_type
    TRANSCRIPT_ENTRY = 0x7F       # seq, sender, receiver, payload


@dataclass(frozen=True)
class WireMessage:
    """A message type tag plus an ordered list of byte-string fields."""

    msg_type: MsgType
    fields: tuple[bytes, ...] = ()

    def field(self, index: int) -> bytes:
        """Return field ``index`` or raise MalformedMessage."""
        if index >= len(self.fields):
            raise MalformedMessage(
                f"{self.msg_type.name} has {len(self.fields)} fields, wanted index {index}"
            )
        return self.fields[index]

    def expect(self, msg_type: MsgType, min_fields: int = 0) -> WireMessage:
        """Assert the type and a minimum field count; returns self."""
        if self.msg_type is not msg_type:
            raise MalformedMessage(f"expected {msg_type.name}, got {self.msg_type.name}")
        if len(self.fields) < min_fields:
            raise MalformedMessage(f"{msg_type.name} needs {min_fields} fields")
        return self


def encode(msg: WireMessage) -> bytes:
    """Serialize to the canonical TLV form."""
    parts = [bytes([int(msg.msg_type)])]
    for value in msg.fields:
        parts.append(_LEN.pack(len(value)))
        parts.append(bytes(value))
    return b"".join(parts)


def decode(data: bytes) -> WireMessage:
    """Parse canonical TLV bytes; rejects truncation, trailing bytes, unknown types."""
    if not data:
        raise MalformedMessage("empty input")
    try:
        msg_type = MsgType(data[0])
    except ValueError as exc:
        raise MalformedMessage(f"unknown msg_type 0x{data[0]:02x}") from exc

    fields: list[bytes] = []
    pos = 1
    end = len(data)
    while pos < end:
        if pos + _LEN.size > end:
            raise MalformedMessage("truncated length prefix")
        (length,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + length > end:
            raise MalformedMessage("length prefix exceeds remaining bytes")
        fields.append(bytes(data[pos:pos + length]))
        pos += length
    return WireMessage(msg_type, tuple(fields))


def signing_input(msg_type: MsgType, fields: list[bytes] | tuple[bytes, ...]) -> bytes:
    """Canonical bytes a signature over a message covers."""
    return encode(WireMessage(msg_type, tuple(fields)))


# === Integer and text field helpers ===

def u8(value: int) -> bytes:
    return struct.pack(">B", value)


def u16(value: int) -> bytes:
    return struct.pack(">H", value)


def u32(value: int) -> bytes:
    return struct.pack(">I", value)


def u64(value: int) -> bytes:
    return struct.pack(">Q", value)


def read_uint(raw: bytes, size: int) -> int:
    """Decode a big-endian unsigned field of exactly ``size`` bytes."""
    if len(raw) != size:
        raise MalformedMessage(f"integer field must be {size} bytes, got {len(raw)}")
    return int.from_bytes(raw, "big")


def text(value: str) -> bytes:
    return value.encode("utf-8")


def read_text(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedMessage("field is not utf-8") from exc


def pack_list(items: list[bytes] | tuple[bytes, ...]) -> bytes:
    """Nest a list of byte strings inside one field (length-prefixed items)."""
    return b"".join(_LEN.pack(len(item)) + item for item in items)


def unpack_list(raw: bytes) -> list[bytes]:
    """Inverse of :func:`pack_list`."""
    items: list[bytes] = []
    pos = 0
    while pos < len(raw):
        if pos + _LEN.size > len(raw):
            raise MalformedMessage("truncated list item prefix")
        (length,) = _LEN.unpack_from(raw, pos)
        pos += _LEN.size
        if pos + length > len(raw):
            raise MalformedMessage("list item exceeds field")
        items.append(raw[pos:pos + length])
        pos += length
    return items
