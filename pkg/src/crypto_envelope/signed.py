"""Shared behaviour for dataclasses that carry a trailing signature field."""

from __future__ import annotations

from dataclasses import replace
from typing import ClassVar, TypeVar

from .primitives import KeyPair, sign, verify
from .wire import MsgType, WireMessage, encode, signing_input

S = TypeVar("S", bound="SignedMixin")


class SignedMixin:
    """Mixin for frozen dataclasses whose last field is ``signature``.

    Subclasses set ``MSG_TYPE`` and implement ``body()`` (every field except
    the signature, in wire order).
    """

    MSG_TYPE: ClassVar[MsgType]
    signature: bytes

    def body(self) -> list[bytes]:
        raise NotImplementedError

    def signed_bytes(self) -> bytes:
        return signing_input(self.MSG_TYPE, self.body())

    def verify(self, public: bytes) -> bool:
        return verify(public, self.signed_bytes(), self.signature)

    def signed_by(self: S, key: KeyPair) -> S:
        return replace(self, signature=sign(key, self.signed_bytes()))

    def to_message(self) -> WireMessage:
        return WireMessage(self.MSG_TYPE, (*self.body(), self.signature))

    def to_bytes(self) -> bytes:
        return encode(self.to_message())
