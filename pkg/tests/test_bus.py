from __future__ import annotations

import numpy as np
import pytest

from crisissim.bus import MessageBroker, OffsetRangeError


class TestPublish:
    def test_first_publish_offset_zero(self):
        broker = MessageBroker()
        assert broker.publish("alerts", b"a") == 0

    def test_offsets_contiguous_in_call_order(self):
        broker = MessageBroker()
        assert [broker.publish("t", bytes([i])) for i in range(3)] == [0, 1, 2]

    def test_interleaved_schedule_preserved(self):
        # oracle: a recorded (topic, payload) schedule replayed against the logs
        rng = np.random.default_rng(0)
        topics = ["a", "b", "c"]
        schedule = [(topics[int(rng.integers(3))], bytes([int(rng.integers(256))]))
                    for _ in range(1000)]
        broker = MessageBroker()
        for topic, payload in schedule:
            broker.publish(topic, payload)
        per_topic = {t: [p for tt, p in schedule if tt == t] for t in topics}
        for t in topics:
            log = list(broker.replay(t, 0))
            assert [m.payload for m in log] == per_topic[t]
            assert [m.offset for m in log] == list(range(len(per_topic[t])))

    def test_empty_topic_name_rejected(self):
        with pytest.raises(ValueError):
            MessageBroker().publish("", b"x")


class TestDeliver:
    def test_deliver_ack_never_redelivered(self):
        broker = MessageBroker()
        broker.publish("t", b"m0")
        broker.subscribe("s", "t")
        msg = broker.deliver("s", "t")
        assert msg.offset == 0
        assert broker.ack("s", "t", 0) is True
        assert broker.deliver("s", "t") is None

    def test_unacked_message_redelivered(self):
        broker = MessageBroker()
        broker.publish("t", b"m0")
        broker.publish("t", b"m1")
        broker.subscribe("s", "t")
        first = broker.deliver("s", "t")
        again = broker.deliver("s", "t")
        assert first.offset == again.offset == 0

    def test_end_of_log_returns_none(self):
        broker = MessageBroker()
        broker.subscribe("s", "t")
        assert broker.deliver("s", "t") is None

    def test_drop_schedule_all_offsets_acked_exactly_once(self):
        # 30% simulated processing failures; the retrying consumer must end
        # up acknowledging exactly the full offset range
        broker = MessageBroker()
        for i in range(500):
            broker.publish("work", f"payload-{i}".encode())
        broker.subscribe("worker", "work")
        rng = np.random.default_rng(1234)
        acked: list[int] = []
        stalls = 0
        while True:
            msg = broker.deliver("worker", "work")
            if msg is None:
                break
            if rng.random() < 0.30:
                stalls += 1  # simulated drop: no ack, must be redelivered
                continue
            assert broker.ack("worker", "work", msg.offset) is True
            acked.append(msg.offset)
        assert acked == list(range(500))
        assert stalls > 0
        assert broker.ack("worker", "work", 0) is False  # exactly-once bookkeeping


class TestReplay:
    def test_replay_identical_sequences(self):
        broker = MessageBroker()
        for i in range(10):
            broker.publish("t", bytes([i]), publish_time=float(i))
        a = list(broker.replay("t", 0))
        b = list(broker.replay("t", 0))
        assert a == b

    def test_replay_from_mid_log_is_suffix(self):
        broker = MessageBroker()
        for i in range(10):
            broker.publish("t", bytes([i]))
        full = list(broker.replay("t", 0))
        assert list(broker.replay("t", 4)) == full[4:]

    def test_offset_beyond_log_raises(self):
        broker = MessageBroker()
        broker.publish("t", b"x")
        with pytest.raises(OffsetRangeError):
            broker.replay("t", 2)

    def test_append_only_under_all_operations(self):
        broker = MessageBroker()
        for i in range(5):
            broker.publish("t", bytes([i]))
        before = list(broker.replay("t", 0))
        broker.subscribe("s", "t")
        broker.deliver("s", "t")
        broker.ack("s", "t", 0)
        broker.publish("t", b"new")
        after = list(broker.replay("t", 0))
        assert after[:5] == before


class TestSnapshot:
    def test_snapshot_roundtrip(self, tmp_path):
        broker = MessageBroker()
        broker.publish("alerts", b"\x00\x01binary", key="k1", publish_time=1.5)
        broker.publish("alerts", b"second", publish_time=2.0)
        paths = broker.snapshot(tmp_path)
        assert len(paths) == 1
        loaded = MessageBroker.load_topic(paths[0])
        orig = list(broker.replay("alerts", 0))
        assert [(m.offset, m.key, m.payload, m.publish_time) for m in loaded] == \
               [(m.offset, m.key, m.payload, m.publish_time) for m in orig]

    def test_snapshot_bytes_stable(self, tmp_path):
        broker = MessageBroker()
        for i in range(20):
            broker.publish("t", bytes([i]), publish_time=float(i))
        d1, d2 = tmp_path / "one", tmp_path / "two"
        (p1,) = broker.snapshot(d1)
        (p2,) = broker.snapshot(d2)
        assert p1.read_bytes() == p2.read_bytes()
