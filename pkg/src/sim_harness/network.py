"""Deterministic discrete-event network.

One FIFO queue, a logical clock in integer seconds, and an append-only
transcript of every delivered message. ``call`` is re-entrant: a party may
make its own calls while handling a delivery.
"""

from __future__ import annotations

import heapq
import logging
import random
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from src.common.config import settings
from src.common.errors import ConfigError, MalformedMessage, NoReply
from src.common.messaging import Endpoint, Envelope
from src.crypto_envelope.primitives import digest
from src.crypto_envelope.wire import MsgType, WireMessage, encode, read_uint

if TYPE_CHECKING:
    from .adversary import Adversary

logger = logging.getLogger(__name__)

# Never carried, whoever asks.
_REFUSED = frozenset({MsgType.TPM_PRIVATE_SECTION, MsgType.CONSUMPTION_RECORD})

MAX_DELIVERIES = 1_000_000


@dataclass(frozen=True)
class Delivery:
    """One transcript entry."""

    seq: int
    sender: str
    receiver: str
    payload: bytes

    @property
    def msg_type(self) -> MsgType:
        return MsgType(self.payload[0])

    @property
    def payload_digest(self) -> bytes:
        return digest(self.payload)


@dataclass(order=True)
class _Scheduled:
    at: int
    order: int
    label: str = field(compare=False)
    action: Callable[[], None] = field(compare=False)


class SimNetwork:
    """Message queue, clock and endpoint registry for one simulation."""

    def __init__(self, seed: int, start_time: int | None = None) -> None:
        self.seed = seed
        self.clock = settings.sim.start_time if start_time is None else start_time
        self.endpoints: dict[str, Endpoint] = {}
        self.queue: deque[Envelope] = deque()
        self.transcript: list[Delivery] = []
        self.adversaries: list[Adversary] = []
        self._scheduled: list[_Scheduled] = []
        self._order = 0

    def rng_for(self, name: str) -> random.Random:
        """Independent deterministic stream for one party."""
        return random.Random(f"{self.seed}:{name}")

    # --- Endpoints ---

    def add(self, endpoint: Endpoint) -> Endpoint:
        if endpoint.name in self.endpoints:
            raise ConfigError(f"duplicate endpoint {endpoint.name}")
        return self.substitute(endpoint)

    def substitute(self, endpoint: Endpoint) -> Endpoint:
        """Register ``endpoint``, replacing any endpoint of the same name."""
        self.endpoints[endpoint.name] = endpoint
        endpoint.attach(self)
        return endpoint

    # --- Transport ---

    def now(self) -> int:
        return self.clock

    def send(self, envelope: Envelope) -> None:
        if envelope.message.msg_type in _REFUSED:
            raise MalformedMessage(f"network refuses to carry {envelope.message.msg_type.name}")
        if envelope.receiver not in self.endpoints:
            raise ConfigError(f"no endpoint named {envelope.receiver}")
        envelopes = [envelope]
        for adversary in self.adversaries:
            envelopes = adversary.on_send(envelopes, self)
        self.queue.extend(envelopes)

    def deliver_one(self) -> Delivery:
        envelope = self.queue.popleft()
        delivery = Delivery(len(self.transcript) + 1, envelope.sender, envelope.receiver, encode(envelope.message))
        self.transcript.append(delivery)
        for adversary in self.adversaries:
            adversary.on_deliver(delivery, self)
        if len(self.transcript) > MAX_DELIVERIES:
            raise NoReply("delivery limit reached; message loop?")
        for reply in self.endpoints[envelope.receiver].receive(envelope):
            self.send(reply)
        return delivery

    def run_until_quiet(self) -> int:
        """Deliver until the queue is empty; returns the number of deliveries."""
        delivered = 0
        while self.queue:
            self.deliver_one()
            delivered += 1
        return delivered

    def call(self, sender: str, receiver: str, message: WireMessage, expect: MsgType) -> WireMessage:
        """Send and keep delivering until ``receiver`` answers with ``expect`` or ERROR."""
        inbox = self.endpoints[sender].inbox
        start = len(inbox)
        self.send(Envelope(sender, receiver, message))
        while True:
            for i in range(start, len(inbox)):
                env = inbox[i]
                if env.sender == receiver and _answers(env.message, message.msg_type, expect):
                    del inbox[i]
                    return env.message
            if not self.queue:
                raise NoReply(f"{receiver} never answered {message.msg_type.name} from {sender}")
            self.deliver_one()

    # --- Clock ---

    def schedule(self, at: int, action: Callable[[], None], label: str = "") -> None:
        """Run ``action`` when the clock reaches ``at``."""
        self._order += 1
        heapq.heappush(self._scheduled, _Scheduled(at, self._order, label, action))

    def advance_clock(self, delta: int) -> None:
        """Move time forward, firing due scheduled actions in time order."""
        if delta < 0:
            raise ConfigError("clock cannot run backwards")
        target = self.clock + delta
        while self._scheduled and self._scheduled[0].at <= target:
            item = heapq.heappop(self._scheduled)
            self.clock = max(self.clock, item.at)
            logger.debug("t=%d firing %s", self.clock, item.label)
            item.action()
            self.run_until_quiet()
        self.clock = target

    @property
    def pending_scheduled(self) -> int:
        return len(self._scheduled)


def _answers(reply: WireMessage, request_type: MsgType, expect: MsgType) -> bool:
    if reply.msg_type is expect:
        return True
    if reply.msg_type is MsgType.ERROR and len(reply.fields) > 2:
        return read_uint(reply.fields[2], 1) == int(request_type)
    return False
