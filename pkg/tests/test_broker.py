"""Partitioned ring-buffer broker: offsets, retention, backpressure, groups."""

import threading
import time

import numpy as np
import pytest

from pilotedge.broker import (
    STAGE_BROKER_IN,
    STAGE_PRODUCED,
    Broker,
    ConsumerGroup,
    Offset,
    Record,
)
from pilotedge.clock import now_micros
from helpers import ReferenceLog
from pilotedge.errors import (
    BackpressureTimeout,
    OffsetOutOfRange,
    OffsetOutOfRetention,
    TopicExistsWithDifferentConfig,
    UnknownTopic,
)

JOB = b"\x01" * 16


def rec(message_id, payload=b"x"):
    return Record(
        job_id=JOB,
        message_id=message_id,
        partition=0,
        payload=payload,
        timestamps=[(STAGE_PRODUCED, now_micros())],
    )


def test_create_topic_and_lookup():
    b = Broker()
    t = b.create_topic("t", partitions=3)
    assert (t.name, t.partition_count, t.retention_records) == ("t", 3, 4096)
    assert b.topic("t") == t


def test_create_topic_idempotent_same_config():
    b = Broker()
    b.create_topic("t", partitions=2)
    b.create_topic("t", partitions=2)
    with pytest.raises(TopicExistsWithDifferentConfig):
        b.create_topic("t", partitions=3)


def test_unknown_topic():
    b = Broker()
    with pytest.raises(UnknownTopic):
        b.topic("nope")
    with pytest.raises(UnknownTopic):
        b.fetch("nope", 0, 0, 1)


def test_produce_assigns_consecutive_offsets():
    b = Broker()
    b.create_topic("t", partitions=1)
    offs = [b.produce("t", 0, rec(i)).value for i in range(5)]
    assert offs == [0, 1, 2, 3, 4]
    assert b.end_offset("t", 0) == 5


def test_produce_appends_broker_timestamp():
    b = Broker()
    b.create_topic("t", partitions=1)
    b.produce("t", 0, rec(0))
    got = b.fetch("t", 0, 0, 1)[0]
    tags = [t for t, _ in got.timestamps]
    assert tags == [STAGE_PRODUCED, STAGE_BROKER_IN]
    times = [us for _, us in got.timestamps]
    assert times == sorted(times)


def test_fetch_returns_isolated_copies():
    b = Broker()
    b.create_topic("t", partitions=1)
    b.produce("t", 0, rec(0))
    first = b.fetch("t", 0, 0, 1)[0]
    first.timestamps.append((9, now_micros()))
    again = b.fetch("t", 0, 0, 1)[0]
    assert len(again.timestamps) == 2


def test_fetch_beyond_end_raises():
    b = Broker()
    b.create_topic("t", partitions=1)
    with pytest.raises(OffsetOutOfRange):
        b.fetch("t", 0, 1, 1)


def test_fetch_long_poll_wakes_on_produce():
    b = Broker()
    b.create_topic("t", partitions=1)
    got = []

    def consume():
        got.extend(b.fetch("t", 0, 0, 10, timeout=5.0))

    t = threading.Thread(target=consume)
    t.start()
    time.sleep(0.05)
    b.produce("t", 0, rec(42))
    t.join(timeout=5.0)
    assert [r.message_id for r in got] == [42]


def test_fetch_timeout_returns_empty():
    b = Broker()
    b.create_topic("t", partitions=1)
    t0 = time.monotonic()
    assert b.fetch("t", 0, 0, 10, timeout=0.1) == []
    assert time.monotonic() - t0 >= 0.09


def test_eviction_without_groups_drops_oldest():
    b = Broker()
    b.create_topic("t", partitions=1, retention=4)
    for i in range(6):
        b.produce("t", 0, rec(i))
    with pytest.raises(OffsetOutOfRetention) as err:
        b.fetch("t", 0, 0, 10)
    assert err.value.oldest_retained == 2
    assert [r.message_id for r in b.fetch("t", 0, 2, 10)] == [2, 3, 4, 5]


def test_backpressure_blocks_until_commit():
    b = Broker()
    b.create_topic("t", partitions=1, retention=2)
    b.assign_partitions(ConsumerGroup("g", members=["c0"]), "t")
    b.produce("t", 0, rec(0))
    b.produce("t", 0, rec(1))
    unblocked = threading.Event()

    def producer():
        b.produce("t", 0, rec(2), timeout=10.0)
        unblocked.set()

    t = threading.Thread(target=producer)
    t.start()
    time.sleep(0.1)
    assert not unblocked.is_set()  # ring full, offset 0 uncommitted
    b.commit_offset("g", Offset("t", 0, 1))
    assert unblocked.wait(timeout=5.0)
    t.join()
    # Offset 0 was evicted to admit the new record, never silently dropped mid-read.
    assert [r.message_id for r in b.fetch("t", 0, 1, 10)] == [1, 2]


def test_backpressure_times_out():
    b = Broker()
    b.create_topic("t", partitions=1, retention=1)
    b.assign_partitions(ConsumerGroup("g", members=["c0"]), "t")
    b.produce("t", 0, rec(0))
    with pytest.raises(BackpressureTimeout):
        b.produce("t", 0, rec(1), timeout=0.1)


def test_commit_is_monotonic():
    b = Broker()
    b.create_topic("t", partitions=1)
    for i in range(3):
        b.produce("t", 0, rec(i))
    b.commit_offset("g", Offset("t", 0, 3))
    b.commit_offset("g", Offset("t", 0, 1))  # stale commit ignored
    assert b.committed("g", "t", 0) == 3


def test_commit_beyond_end_rejected():
    b = Broker()
    b.create_topic("t", partitions=1)
    with pytest.raises(OffsetOutOfRange):
        b.commit_offset("g", Offset("t", 0, 5))


def test_assignment_round_robin_over_sorted_members():
    b = Broker()
    b.create_topic("t", partitions=5)
    group = ConsumerGroup("g", members=["charlie", "alice", "bob"])
    assignment = b.assign_partitions(group, "t")
    assert assignment == {0: "alice", 1: "bob", 2: "charlie", 3: "alice", 4: "bob"}
    assert group.assignment == assignment


def test_record_validation():
    with pytest.raises(ValueError):
        Record(job_id=b"short", message_id=0, partition=0, payload=b"").validate()
    with pytest.raises(ValueError):
        Record(job_id=JOB, message_id=-1, partition=0, payload=b"").validate()
    bad = Record(job_id=JOB, message_id=0, partition=0, payload=b"",
                 timestamps=[(1, 10), (2, 5)])
    with pytest.raises(ValueError):
        bad.validate()


def test_concurrent_producers_conserve_every_record():
    b = Broker()
    b.create_topic("t", partitions=4)
    per_thread = 200

    def producer(p):
        for i in range(per_thread):
            b.produce("t", p, rec(p * per_thread + i))

    threads = [threading.Thread(target=producer, args=(p,)) for p in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    seen = []
    for p in range(4):
        seen.extend(r.message_id for r in b.fetch("t", p, 0, per_thread))
    assert sorted(seen) == list(range(4 * per_thread))


# ------------------------------------------------------- reference oracle

@pytest.mark.parametrize("seed", [0, 1, 7, 13, 99])
def test_broker_matches_reference_log(seed):
    """Randomized produce/fetch/commit interleavings, with a consumer restart."""
    rng = np.random.default_rng(seed)
    capacity = int(rng.integers(2, 9))
    use_group = bool(rng.integers(0, 2))
    b = Broker()
    b.create_topic("t", partitions=1, retention=capacity)
    if use_group:
        b.assign_partitions(ConsumerGroup("g", members=["c0"]), "t")
    ref = ReferenceLog(capacity)
    next_id = 0
    cursor = 0  # consumer position

    for step in range(400):
        op = rng.integers(0, 10)
        if op < 4:
            expect = ref.produce(next_id, use_group)
            if expect is None:
                with pytest.raises(BackpressureTimeout):
                    b.produce("t", 0, rec(next_id), timeout=0.0)
            else:
                assert b.produce("t", 0, rec(next_id)).value == expect
                next_id += 1
        elif op < 7:
            want = int(rng.integers(1, 6))
            expect = ref.fetch(cursor, want)
            if expect is OffsetOutOfRange:
                with pytest.raises(OffsetOutOfRange):
                    b.fetch("t", 0, cursor, want)
            elif expect is OffsetOutOfRetention:
                with pytest.raises(OffsetOutOfRetention) as err:
                    b.fetch("t", 0, cursor, want)
                assert err.value.oldest_retained == ref.base
                cursor = ref.base  # skip-forward recovery
            else:
                got = [r.message_id for r in b.fetch("t", 0, cursor, want)]
                assert got == expect
                cursor += len(got)
        elif op < 9:
            if use_group:
                value = int(rng.integers(0, cursor + 1))
                assert ref.commit("g", value) is None
                b.commit_offset("g", Offset("t", 0, value))
                assert b.committed("g", "t", 0) == ref.committed["g"]
        else:
            # Restart: resume from the last committed offset (0 when none).
            cursor = ref.committed.get("g", 0) if use_group else ref.base
    assert b.end_offset("t", 0) == len(ref.items)
