# Crypto envelope: hash/sign/encrypt contracts and the canonical TLV codec
"""
Primitive cryptographic contracts and the byte-exact serialization every
protocol message uses.
"""

from .primitives import (
    DIGEST_SIZE,
    Digest,
    KeyPair,
    KeyUsage,
    decrypt,
    digest,
    encrypt_to,
    generate_keypair,
    sign,
    verify,
)
from .signed import SignedMixin
from .wire import MsgType, WireMessage, decode, encode, signing_input

__all__ = [
    "DIGEST_SIZE",
    "Digest",
    "KeyPair",
    "KeyUsage",
    "MsgType",
    "SignedMixin",
    "WireMessage",
    "decode",
    "decrypt",
    "digest",
    "encode",
    "encrypt_to",
    "generate_keypair",
    "sign",
    "signing_input",
    "verify",
]
