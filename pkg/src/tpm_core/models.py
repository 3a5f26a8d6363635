"""Data models for the software TPM."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

from src.common.errors import MalformedMessage
from src.crypto_envelope.primitives import DIGEST_SIZE, KeyPair
from src.crypto_envelope.signed import SignedMixin
from src.crypto_envelope.wire import (
    MsgType,
    WireMessage,
    decode,
    encode,
    pack_list,
    read_text,
    text,
    unpack_list,
)


def _pack_selection(selection: tuple[int, ...]) -> bytes:
    return bytes(selection)


def _unpack_values(raw: bytes) -> tuple[bytes, ...]:
    values = tuple(unpack_list(raw))
    if any(len(v) != DIGEST_SIZE for v in values):
        raise MalformedMessage("PCR value must be 32 bytes")
    return values


@dataclass(frozen=True)
class EkCredential(SignedMixin):
    """Manufacturer assertion that the holder of the EK is a conforming TPM."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.EK_CREDENTIAL

    ek_pub: bytes
    ek_enc_pub: bytes
    manufacturer_id: str
    model: str
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [self.ek_pub, self.ek_enc_pub, text(self.manufacturer_id), text(self.model)]

    @classmethod
    def from_bytes(cls, raw: bytes) -> EkCredential:
        msg = decode(raw).expect(MsgType.EK_CREDENTIAL, 5)
        return cls(
            ek_pub=msg.field(0),
            ek_enc_pub=msg.field(1),
            manufacturer_id=read_text(msg.field(2)),
            model=read_text(msg.field(3)),
            signature=msg.field(4),
        )


@dataclass(frozen=True)
class PlatformCredential(SignedMixin):
    """Manufacturer statement about the platform a TPM is soldered into."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.PLATFORM_CREDENTIAL

    manufacturer_id: str
    model: str
    ek_digest: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.manufacturer_id), text(self.model), self.ek_digest]

    @classmethod
    def from_bytes(cls, raw: bytes) -> PlatformCredential:
        msg = decode(raw).expect(MsgType.PLATFORM_CREDENTIAL, 4)
        return cls(read_text(msg.field(0)), read_text(msg.field(1)), msg.field(2), msg.field(3))


@dataclass(frozen=True)
class IdentityBinding(SignedMixin):
    """AIK self-signature binding its label and public key (TPM_MakeIdentity output)."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.IDENTITY_BINDING

    label: str
    aik_pub: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.label), self.aik_pub]

    def verify(self, public: bytes | None = None) -> bool:
        """Self-signed: checks against the bound AIK unless a key is given."""
        return super().verify(self.aik_pub if public is None else public)

    @classmethod
    def from_bytes(cls, raw: bytes) -> IdentityBinding:
        msg = decode(raw).expect(MsgType.IDENTITY_BINDING, 3)
        return cls(read_text(msg.field(0)), msg.field(1), msg.field(2))


@dataclass(frozen=True)
class Quote(SignedMixin):
    """AIK-signed PCR values plus the verifier's nonce."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.QUOTE

    pcr_selection: tuple[int, ...]
    pcr_values: tuple[bytes, ...]
    external_nonce: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [_pack_selection(self.pcr_selection), pack_list(self.pcr_values), self.external_nonce]

    def values_by_index(self) -> dict[int, bytes]:
        return dict(zip(self.pcr_selection, self.pcr_values))

    @classmethod
    def from_bytes(cls, raw: bytes) -> Quote:
        msg = decode(raw).expect(MsgType.QUOTE, 4)
        selection = tuple(msg.field(0))
        values = _unpack_values(msg.field(1))
        if len(selection) != len(values):
            raise MalformedMessage("quote selection and values differ in length")
        return cls(selection, values, msg.field(2), msg.field(3))


def verify_quote(quote: Quote, aik_pub: bytes) -> bool:
    """Check the AIK signature on a quote."""
    return quote.verify(aik_pub)


@dataclass(frozen=True)
class SealedBlob:
    """Payload encrypted under a TPM-resident key, gated on PCR values."""

    pcr_selection: tuple[int, ...]
    expected_values: tuple[bytes, ...]
    tpm_id: bytes
    ciphertext: bytes
    integrity_tag: bytes

    def to_bytes(self) -> bytes:
        return encode(WireMessage(MsgType.SEALED_BLOB, (
            _pack_selection(self.pcr_selection),
            pack_list(self.expected_values),
            self.tpm_id,
            self.ciphertext,
            self.integrity_tag,
        )))

    @classmethod
    def from_bytes(cls, raw: bytes) -> SealedBlob:
        msg = decode(raw).expect(MsgType.SEALED_BLOB, 5)
        return cls(
            tuple(msg.field(0)),
            _unpack_values(msg.field(1)),
            msg.field(2),
            msg.field(3),
            msg.field(4),
        )


@dataclass
class TpmState:
    """Per-device root of trust.

    ``ek`` and ``ek_decrypt`` are fixed at manufacture. Nothing in this
    structure is serialized except through ``Tpm.export_snapshot``.
    """

    ek: KeyPair
    ek_decrypt: KeyPair
    ek_credential: EkCredential
    platform_credential: PlatformCredential
    storage_key: KeyPair
    pcrs: list[bytes]
    owner_auth: bytes | None = None
    aiks: dict[str, KeyPair] = field(default_factory=dict)
    activated: set[str] = field(default_factory=set)
    bind_keys: dict[str, KeyPair] = field(default_factory=dict)
    nonce_cache: set[bytes] = field(default_factory=set)


@dataclass(frozen=True)
class AikCredential(SignedMixin):
    """Privacy-CA certificate binding an AIK public key to a pseudonym.

    Carries no EK public key and no customer identity.
    """

    MSG_TYPE: ClassVar[MsgType] = MsgType.AIK_CREDENTIAL

    identity_label: str
    aik_pub: bytes
    manufacturer_id: str
    model: str
    issued_at: int
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [
            text(self.identity_label),
            self.aik_pub,
            text(self.manufacturer_id),
            text(self.model),
            self.issued_at.to_bytes(8, "big"),
        ]

    @classmethod
    def from_bytes(cls, raw: bytes) -> AikCredential:
        msg = decode(raw).expect(MsgType.AIK_CREDENTIAL, 6)
        return cls(
            identity_label=read_text(msg.field(0)),
            aik_pub=msg.field(1),
            manufacturer_id=read_text(msg.field(2)),
            model=read_text(msg.field(3)),
            issued_at=int.from_bytes(msg.field(4), "big"),
            signature=msg.field(5),
        )


@dataclass(frozen=True)
class BindKeyCert(SignedMixin):
    """AIK signature over a TPM bind key, so providers can encrypt to the device."""

    MSG_TYPE: ClassVar[MsgType] = MsgType.BIND_KEY_CERT

    identity_label: str
    bind_pub: bytes
    signature: bytes = b""

    def body(self) -> list[bytes]:
        return [text(self.identity_label), self.bind_pub]

    @classmethod
    def from_bytes(cls, raw: bytes) -> BindKeyCert:
        msg = decode(raw).expect(MsgType.BIND_KEY_CERT, 3)
        return cls(read_text(msg.field(0)), msg.field(1), msg.field(2))
