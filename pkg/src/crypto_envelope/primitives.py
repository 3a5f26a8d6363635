"""Hash, signature and public-key encryption contracts.

Signatures are Ed25519; encryption to a public key is an X25519 sealed box
(ephemeral key agreement, HKDF-SHA256, AES-256-GCM). Keys are derived from a
caller-supplied ``random.Random`` so simulations are reproducible.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass, field
from enum import Enum
from typing import NewType

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from src.common.errors import DecryptFailure, UsageViolation

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
_GCM_NONCE_SIZE = 12
_HKDF_INFO = b"stb-sealed-box-v1"

Digest = NewType("Digest", bytes)


def digest(data: bytes) -> Digest:
    """SHA-256 of ``data``; always 32 bytes."""
    return Digest(hashlib.sha256(data).digest())


class KeyUsage(str, Enum):
    """What a key pair may be used for."""
    SIGN = "sign"
    DECRYPT = "decrypt"


@dataclass(frozen=True, eq=False)
class KeyPair:
    """An asymmetric key pair with a fixed usage.

    ``public`` is the raw 32-byte public key. The private handle is a
    ``cryptography`` key object and is never part of repr or wire output.
    """

    public: bytes
    usage: KeyUsage
    _private: Ed25519PrivateKey | X25519PrivateKey = field(repr=False)

    def private_bytes_for_audit(self) -> bytes:
        """Raw private key bytes, for transcript leak scans only."""
        return self._private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        )

    @classmethod
    def from_private_bytes(cls, usage: KeyUsage, raw: bytes) -> KeyPair:
        """Rebuild a key pair from raw private bytes (snapshot import)."""
        if usage is KeyUsage.SIGN:
            private: Ed25519PrivateKey | X25519PrivateKey = Ed25519PrivateKey.from_private_bytes(raw)
        else:
            private = X25519PrivateKey.from_private_bytes(raw)
        public = private.public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )
        return cls(public=public, usage=usage, _private=private)


def generate_keypair(usage: KeyUsage, rng: random.Random | None = None) -> KeyPair:
    """Create a key pair; deterministic when ``rng`` is seeded."""
    seed = rng.randbytes(32) if rng is not None else secrets.token_bytes(32)
    return KeyPair.from_private_bytes(usage, seed)


def sign(key: KeyPair, data: bytes) -> bytes:
    """Sign ``data`` with a Sign key."""
    if key.usage is not KeyUsage.SIGN:
        raise UsageViolation("decrypt key cannot sign")
    return key._private.sign(data)


def verify(public: bytes, data: bytes, signature: bytes) -> bool:
    """Check an Ed25519 signature. Never raises."""
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, data)
        return True
    except (InvalidSignature, ValueError):
        return False


def _derive_key(shared: bytes, ephemeral_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=ephemeral_pub + recipient_pub,
        info=_HKDF_INFO,
    ).derive(shared)


def encrypt_to(public: bytes, data: bytes, rng: random.Random | None = None) -> bytes:
    """Encrypt ``data`` so only the holder of the Decrypt key for ``public`` can read it.

    Layout: ephemeral public key (32) || GCM nonce (12) || ciphertext+tag.
    """
    try:
        recipient = X25519PublicKey.from_public_bytes(public)
    except ValueError as exc:
        raise DecryptFailure(f"not an encryption key: {exc}") from exc
    ephemeral = generate_keypair(KeyUsage.DECRYPT, rng)
    shared = ephemeral._private.exchange(recipient)
    key = _derive_key(shared, ephemeral.public, public)
    nonce = rng.randbytes(_GCM_NONCE_SIZE) if rng is not None else secrets.token_bytes(_GCM_NONCE_SIZE)
    return ephemeral.public + nonce + AESGCM(key).encrypt(nonce, data, ephemeral.public)


def decrypt(key: KeyPair, ciphertext: bytes) -> bytes:
    """Open a sealed box produced by :func:`encrypt_to`."""
    if key.usage is not KeyUsage.DECRYPT:
        raise UsageViolation("sign key cannot decrypt")
    if len(ciphertext) < PUBLIC_KEY_SIZE + _GCM_NONCE_SIZE + 16:
        raise DecryptFailure("ciphertext too short")
    ephemeral_pub = ciphertext[:PUBLIC_KEY_SIZE]
    nonce = ciphertext[PUBLIC_KEY_SIZE:PUBLIC_KEY_SIZE + _GCM_NONCE_SIZE]
    body = ciphertext[PUBLIC_KEY_SIZE + _GCM_NONCE_SIZE:]
    try:
        shared = key._private.exchange(X25519PublicKey.from_public_bytes(ephemeral_pub))
        sym = _derive_key(shared, ephemeral_pub, key.public)
        return AESGCM(sym).decrypt(nonce, body, ephemeral_pub)
    except (InvalidTag, ValueError) as exc:
        raise DecryptFailure("ciphertext does not open under this key") from exc
