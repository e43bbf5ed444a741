"""Embedded topic broker: append-only logs, at-least-once delivery, replay.

One broker instance backs a whole run. Topics are auto-created on first
publish and hold immutable, contiguously-offset messages. Each subscriber
tracks a cursor plus the set of delivered-but-unacknowledged offsets; those
are redelivered (lowest first) ahead of new messages, which gives
at-least-once semantics under consumer failures and exactly-once effects once
the consumer acknowledges. Logs snapshot to line-delimited records for replay
across processes.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import dataclass
from pathlib import Path

__all__ = ["Message", "Subscription", "MessageBroker", "OffsetRangeError"]


class OffsetRangeError(IndexError):
    pass


@dataclass(frozen=True)
class Message:
    topic: str
    offset: int
    key: str | None
    payload: bytes
    publish_time: float


@dataclass
class Subscription:
    subscriber_id: str
    topic: str
    next_offset: int = 0
    pending: set[int] = None

    def __post_init__(self):
        if self.pending is None:
            self.pending = set()


class MessageBroker:
    def __init__(self):
        self._logs: dict[str, list[Message]] = {}
        self._subs: dict[tuple[str, str], Subscription] = {}
        self._lock = threading.RLock()

    def publish(self, topic: str, payload: bytes, key: str | None = None,
                publish_time: float = 0.0) -> int:
        if not topic:
            raise ValueError("topic name must be nonempty")
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        with self._lock:
            log = self._logs.setdefault(topic, [])
            offset = len(log)
            log.append(Message(topic, offset, key, bytes(payload), publish_time))
            return offset

    def topics(self) -> list[str]:
        with self._lock:
            return sorted(self._logs)

    def length(self, topic: str) -> int:
        with self._lock:
            return len(self._logs.get(topic, []))

    def subscribe(self, subscriber_id: str, topic: str, from_offset: int = 0) -> Subscription:
        with self._lock:
            sub = Subscription(subscriber_id, topic, next_offset=from_offset)
            self._subs[(subscriber_id, topic)] = sub
            return sub

    def deliver(self, subscriber_id: str, topic: str) -> Message | None:
        """Next message for the subscriber; unacked offsets redeliver first.

        Returns None at end of log with nothing pending.
        """
        with self._lock:
            sub = self._subs.get((subscriber_id, topic))
            if sub is None:
                raise KeyError(f"no subscription ({subscriber_id!r}, {topic!r})")
            log = self._logs.get(topic, [])
            if sub.pending:
                return log[min(sub.pending)]
            if sub.next_offset < len(log):
                msg = log[sub.next_offset]
                sub.pending.add(msg.offset)
                sub.next_offset += 1
                return msg
            return None

    def ack(self, subscriber_id: str, topic: str, offset: int) -> bool:
        with self._lock:
            sub = self._subs.get((subscriber_id, topic))
            if sub is None:
                raise KeyError(f"no subscription ({subscriber_id!r}, {topic!r})")
            if offset in sub.pending:
                sub.pending.discard(offset)
                return True
            return False

    def replay(self, topic: str, from_offset: int = 0):
        """Ordered iterator over a topic's log from the given offset."""
        with self._lock:
            log = list(self._logs.get(topic, []))
        if from_offset > len(log):
            raise OffsetRangeError(
                f"offset {from_offset} beyond log length {len(log)}")
        return iter(log[from_offset:])

    # -- persistence ---------------------------------------------------------

    def snapshot(self, directory) -> list[Path]:
        """Write each topic's log to <dir>/<topic>.jsonl (base64 payloads)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        with self._lock:
            for topic in sorted(self._logs):
                path = directory / f"{topic.replace('/', '_')}.jsonl"
                with open(path, "w", encoding="utf-8") as fh:
                    for m in self._logs[topic]:
                        fh.write(json.dumps({
                            "offset": m.offset,
                            "key": m.key,
                            "publish_time": m.publish_time,
                            "payload": base64.b64encode(m.payload).decode("ascii"),
                        }, sort_keys=True) + "\n")
                written.append(path)
        return written

    @staticmethod
    def load_topic(path) -> list[Message]:
        topic = Path(path).stem
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                out.append(Message(
                    topic=topic,
                    offset=rec["offset"],
                    key=rec["key"],
                    payload=base64.b64decode(rec["payload"]),
                    publish_time=rec["publish_time"],
                ))
        return out
