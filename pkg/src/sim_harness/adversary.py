"""Network adversaries.

Adversaries only touch queued messages or substitute an endpoint of their
own; they never read a party's private state.
"""

from __future__ import annotations

import logging
import random
from dataclasses import replace
from typing import ClassVar

from src.common.config import settings
from src.common.errors import DecryptFailure, EnrollmentFailed, MalformedMessage, StbError
from src.common.messaging import Envelope
from src.crypto_envelope.primitives import SIGNATURE_SIZE, encrypt_to
from src.crypto_envelope.wire import MsgType, WireMessage, decode, encode, text
from src.measured_boot.models import BootLog
from src.set_top_box.box import SetTopBox
from src.set_top_box.models import AIK_LABEL
from src.tpm_core.models import AikCredential, IdentityBinding

from .network import Delivery, SimNetwork

logger = logging.getLogger(__name__)

# Requests whose field 2 is the boot log.
BOOT_LOG_CARRIERS = frozenset({MsgType.REGISTRATION_REQUEST, MsgType.KEY_REQUEST, MsgType.TOPUP_REQUEST})


class Adversary:
    """Base hook set; subclasses override what they need."""

    kind: ClassVar[str] = "Adversary"

    def __init__(self, target: str | None = None) -> None:
        self.target = target
        self.hits = 0

    def install(self, net: SimNetwork) -> None:
        net.adversaries.append(self)

    def on_send(self, envelopes: list[Envelope], net: SimNetwork) -> list[Envelope]:
        return envelopes

    def on_deliver(self, delivery: Delivery, net: SimNetwork) -> None:
        pass

    def _targets(self, env: Envelope) -> bool:
        return self.target is None or self.target in (env.sender, env.receiver)


class Replay(Adversary):
    """Duplicates matching messages as they are enqueued."""

    kind = "Replay"

    def __init__(
        self,
        target: str | None = None,
        messages: frozenset[MsgType] = frozenset({MsgType.DEPOSIT_VOUCHER, MsgType.UPDATE_PACKAGE}),
        copies: int = 1,
    ) -> None:
        super().__init__(target)
        self.messages = messages
        self.copies = copies

    def on_send(self, envelopes: list[Envelope], net: SimNetwork) -> list[Envelope]:
        out: list[Envelope] = []
        for env in envelopes:
            out.append(env)
            if env.message.msg_type in self.messages and self._targets(env):
                out.extend([env] * self.copies)
                self.hits += self.copies
                logger.info("replay: %s %s -> %s x%d", env.message.msg_type.name, env.sender, env.receiver, self.copies)
        return out


class TamperLog(Adversary):
    """Flips one byte of one boot image inside boot-log transport."""

    kind = "TamperLog"

    def __init__(self, target: str | None = None, event_index: int | None = None,
                 rng: random.Random | None = None) -> None:
        super().__init__(target)
        self.event_index = event_index
        self._rng = rng or random.Random(0)

    def on_send(self, envelopes: list[Envelope], net: SimNetwork) -> list[Envelope]:
        return [self._tamper(env) if self._applies(env) else env for env in envelopes]

    def _applies(self, env: Envelope) -> bool:
        return env.message.msg_type in BOOT_LOG_CARRIERS and self._targets(env) and len(env.message.fields) > 2

    def _tamper(self, env: Envelope) -> Envelope:
        fields = list(env.message.fields)
        try:
            log = BootLog.from_bytes(fields[2])
        except MalformedMessage:
            return env
        if not log.events:
            return env
        index = self.event_index if self.event_index is not None else self._rng.randrange(len(log.events))
        event = log.events[index % len(log.events)]
        image = bytearray(event.component_image or b"\x00")
        pos = self._rng.randrange(len(image))
        image[pos] ^= 1 << self._rng.randrange(8)
        events = list(log.events)
        events[index % len(events)] = replace(event, component_image=bytes(image))
        fields[2] = BootLog(tuple(events)).to_bytes()
        self.hits += 1
        logger.info("tamper: %s event %d byte %d", env.message.msg_type.name, index % len(events), pos)
        return replace(env, message=WireMessage(env.message.msg_type, tuple(fields)))


class Eavesdrop(Adversary):
    """Copies every delivery to an analysis log."""

    kind = "Eavesdrop"

    def __init__(self, target: str | None = None) -> None:
        super().__init__(target)
        self.captured: list[Delivery] = []

    def on_deliver(self, delivery: Delivery, net: SimNetwork) -> None:
        if self.target is None or self.target in (delivery.sender, delivery.receiver):
            self.captured.append(delivery)
            self.hits += 1


class RelayTamper(Adversary):
    """Corrupts the last byte of enrollment responses a relay forwards."""

    kind = "RelayTamper"

    def on_send(self, envelopes: list[Envelope], net: SimNetwork) -> list[Envelope]:
        out = []
        for env in envelopes:
            if env.message.msg_type is MsgType.ENROLL_RESPONSE and (self.target is None or env.sender == self.target):
                raw = bytearray(encode(env.message))
                raw[-1] ^= 0xFF
                env = replace(env, message=decode(bytes(raw)))
                self.hits += 1
            out.append(env)
        return out


class FakeTpm(Adversary):
    """Substitutes a box whose TPM has no genuine endorsement key.

    Modes:
        self_signed: EK credential signed by a rogue root.
        stolen_ek: another TPM's public EK credential with the attacker's AIK.
        borrowed_aik: stolen EK credential plus another box's AIK public key.
    """

    kind = "FakeTpm"
    MODES = ("self_signed", "stolen_ek", "borrowed_aik")

    def __init__(self, target: str, mode: str = "stolen_ek", victim: str | None = None) -> None:
        super().__init__(target)
        if mode not in self.MODES:
            raise ValueError(f"unknown FakeTpm mode {mode}")
        self.mode = mode
        self.victim = victim


class FakeTpmBox(SetTopBox):
    """Box built around a rogue TPM, optionally replaying a victim's public credentials."""

    def __init__(self, *args, mode: str = "stolen_ek", victim: SetTopBox | None = None, **kwargs) -> None:
        super().__init__(*args, **kwargs)
        self.mode = mode
        # Only the victim's public credentials are used.
        self.victim = victim

    def take_ownership_online(self, via: str | None = None) -> AikCredential:
        if self.mode == "self_signed" or self.victim is None:
            return super().take_ownership_online(via)

        tpm = self.tpm
        auth = self._rng.randbytes(settings.tpm.owner_auth_bytes)
        tpm.take_ownership(auth)
        self.state.owner_auth = auth
        _, binding = tpm.make_identity(auth, AIK_LABEL)
        if self.mode == "borrowed_aik":
            stolen = self.victim.state.credential
            borrowed = stolen.aik_pub if stolen is not None else self._rng.randbytes(32)
            binding = IdentityBinding(binding.label, borrowed, binding.signature)

        body = encode(WireMessage(MsgType.ENROLL_BODY, (
            self.victim.tpm.ek_credential.to_bytes(),
            self.victim.tpm.platform_credential.to_bytes(),
            binding.to_bytes(),
            text(self.customer_id),
        )))
        request = WireMessage(MsgType.ENROLL_REQUEST, (encrypt_to(self.roots.pca_keys.enc_pub, body, self._rng),))
        peer = via or self.roots.pca
        try:
            challenge = self.call(peer, request, MsgType.ENROLL_CHALLENGE).expect(MsgType.ENROLL_CHALLENGE, 2)
            try:
                response = tpm.answer_challenge(auth, AIK_LABEL, challenge.field(1))
            except DecryptFailure:
                # Cannot open a challenge sealed to someone else's EK; guess.
                response = self._rng.randbytes(SIGNATURE_SIZE)
            blob = self.call(
                peer, WireMessage(MsgType.ENROLL_RESPONSE, (challenge.field(0), response)), MsgType.ACTIVATION_BLOB,
            )
            credential = tpm.activate_identity(auth, AIK_LABEL, blob.field(0))
        except StbError as exc:
            logger.warning("%s (fake TPM, %s): enrollment failed: %s", self.name, self.mode, exc.code)
            raise EnrollmentFailed(f"{exc.code}: {exc.detail}") from exc
        self.state.credential = credential
        return credential


ADVERSARY_KINDS = {cls.kind: cls for cls in (Replay, TamperLog, Eavesdrop, RelayTamper, FakeTpm)}
