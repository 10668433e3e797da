"""Typed in-process publish/subscribe bus.

Every cross-module message travels through the bus as an immutable
Envelope. Topics are registered with a payload kind and keep a strictly
increasing sequence counter, so observable ordering is the serialized
publication order regardless of which worker produced the message.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Any, Callable


class UnknownTopicError(LookupError):
    """Raised when publishing or subscribing to a topic never registered."""


@dataclass(frozen=True)
class Envelope:
    """One published message plus its bookkeeping.

    t_wall_in/t_wall_out carry the producing module's wall-clock processing
    window in nanoseconds; they are the only wall-time fields in the system
    and are stripped when comparing runs.
    """

    topic: str
    seq: int
    t_virtual: float
    t_wall_in: int
    t_wall_out: int
    payload: Any


Subscriber = Callable[[Envelope], None]


class MessageBus:
    def __init__(self) -> None:
        self._kinds: dict[str, tuple[type, ...]] = {}
        self._seq: dict[str, int] = {}
        self._subscribers: dict[str, list[Subscriber]] = {}
        self._lock = threading.Lock()

    def register(self, topic: str, payload_kind: type | tuple[type, ...]) -> None:
        """Declare a topic and the payload type(s) it accepts."""
        kinds = payload_kind if isinstance(payload_kind, tuple) else (payload_kind,)
        with self._lock:
            self._kinds[topic] = kinds
            self._seq.setdefault(topic, 0)
            self._subscribers.setdefault(topic, [])

    def topics(self) -> tuple[str, ...]:
        return tuple(self._kinds)

    def subscribe(self, topic: str, fn: Subscriber) -> None:
        if topic not in self._kinds:
            raise UnknownTopicError(f"unknown topic: {topic!r}")
        self._subscribers[topic].append(fn)

    def publish(
        self,
        topic: str,
        payload: Any,
        t_virtual: float,
        *,
        t_wall_in: int | None = None,
        t_wall_out: int | None = None,
    ) -> int:
        """Publish a payload; returns the per-topic sequence number (from 1).

        Subscribers are notified synchronously, in registration order, so
        they observe strictly increasing seq per topic.
        """
        if topic not in self._kinds:
            raise UnknownTopicError(f"unknown topic: {topic!r}")
        if not isinstance(payload, self._kinds[topic]):
            expected = "/".join(k.__name__ for k in self._kinds[topic])
            raise TypeError(
                f"payload kind mismatch on {topic!r}: "
                f"got {type(payload).__name__}, expected {expected}"
            )
        now = time.monotonic_ns()
        wall_in = now if t_wall_in is None else t_wall_in
        wall_out = now if t_wall_out is None else t_wall_out
        if wall_out < wall_in:
            raise ValueError("t_wall_out must be >= t_wall_in")
        with self._lock:
            self._seq[topic] += 1
            envelope = Envelope(topic, self._seq[topic], t_virtual, wall_in, wall_out, payload)
            subscribers = list(self._subscribers[topic])
        for fn in subscribers:
            fn(envelope)
        return envelope.seq


class LatestCache:
    """Keeps the most recent envelope per topic; the mid-layer's join point."""

    def __init__(self, bus: MessageBus, topics: list[str] | tuple[str, ...]) -> None:
        self._latest: dict[str, Envelope | None] = {t: None for t in topics}
        for topic in topics:
            bus.subscribe(topic, self._store)

    def _store(self, envelope: Envelope) -> None:
        self._latest[envelope.topic] = envelope

    def latest(self, topic: str) -> Envelope | None:
        return self._latest[topic]
