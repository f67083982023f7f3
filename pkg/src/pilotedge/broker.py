"""Embedded partitioned append-only message log.

One broker holds named topics; each topic is a fixed set of partitions,
each partition an independently ordered ring buffer of records. Producers
append, consumers fetch by offset and commit per consumer group. When a
partition ring is full and some registered group still needs the oldest
record, produce blocks instead of dropping (backpressure), so message
counts stay lossless for benchmarking.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .clock import now_micros
from .errors import (
    BackpressureTimeout,
    OffsetOutOfRange,
    OffsetOutOfRetention,
    PartitionOutOfRange,
    TopicExistsWithDifferentConfig,
    UnknownTopic,
)

# Timestamp stage tags carried inside records and metric chains.
STAGE_PRODUCED = 1
STAGE_BROKER_IN = 2
STAGE_CONSUMED = 3
STAGE_PROCESSED = 4

DEFAULT_RETENTION = 4096
DEFAULT_PRODUCE_TIMEOUT_S = 30.0


@dataclass
class Record:
    """Unit of data movement: a framed point-block plus its timestamp chain.

    ``timestamps`` is an ordered list of (stage_tag, epoch_micros) pairs and
    must be non-decreasing in time. ``job_id`` is the raw 16-byte UUID of the
    pipeline run the record belongs to.
    """

    job_id: bytes
    message_id: int
    partition: int
    payload: bytes
    timestamps: List[Tuple[int, int]] = field(default_factory=list)

    def validate(self) -> None:
        if len(self.job_id) != 16:
            raise ValueError("job_id must be exactly 16 bytes")
        if self.message_id < 0:
            raise ValueError("message_id must be non-negative")
        times = [t for _, t in self.timestamps]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("record timestamps must be non-decreasing")

    def stage_micros(self, tag: int) -> int:
        """First timestamp recorded for a stage tag, 0 if absent."""
        for t, us in self.timestamps:
            if t == tag:
                return us
        return 0


@dataclass(frozen=True)
class Topic:
    name: str
    partition_count: int
    retention_records: int = DEFAULT_RETENTION


@dataclass(frozen=True)
class Offset:
    topic: str
    partition: int
    value: int


@dataclass
class ConsumerGroup:
    group_id: str
    members: List[str] = field(default_factory=list)
    assignment: Dict[int, str] = field(default_factory=dict)


class _Partition:
    """Ring buffer of records with base/end offsets and wait conditions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.records: deque = deque()
        self.base_offset = 0  # oldest retained
        self.end_offset = 0  # next to assign
        self.lock = threading.Lock()
        self.not_empty = threading.Condition(self.lock)
        self.space = threading.Condition(self.lock)


class Broker:
    """In-memory broker; all operations are thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self._topics: Dict[str, Topic] = {}
        self._partitions: Dict[str, List[_Partition]] = {}
        # (group, topic, partition) -> committed offset (next offset to read)
        self._committed: Dict[Tuple[str, str, int], int] = {}
        self._groups: Dict[str, set] = {}  # topic -> registered group ids

    # ------------------------------------------------------------ topics

    def create_topic(self, name: str, partitions: int, retention: int = DEFAULT_RETENTION) -> Topic:
        if partitions < 1 or retention < 1:
            raise ValueError("partitions and retention must be positive")
        with self._lock:
            existing = self._topics.get(name)
            if existing is not None:
                if existing.partition_count == partitions and existing.retention_records == retention:
                    return existing
                raise TopicExistsWithDifferentConfig(
                    f"topic {name!r} exists with {existing.partition_count} partitions, "
                    f"retention {existing.retention_records}"
                )
            topic = Topic(name, partitions, retention)
            self._topics[name] = topic
            self._partitions[name] = [_Partition(retention) for _ in range(partitions)]
            self._groups.setdefault(name, set())
            return topic

    def topic(self, name: str) -> Topic:
        with self._lock:
            try:
                return self._topics[name]
            except KeyError:
                raise UnknownTopic(f"no topic {name!r}") from None

    def _part(self, topic: str, partition: int) -> _Partition:
        with self._lock:
            if topic not in self._topics:
                raise UnknownTopic(f"no topic {topic!r}")
            parts = self._partitions[topic]
        if not 0 <= partition < len(parts):
            raise PartitionOutOfRange(
                f"partition {partition} out of range for topic {topic!r} with {len(parts)} partitions"
            )
        return parts[partition]

    # ------------------------------------------------------------ produce

    def _min_committed(self, topic: str, partition: int) -> Optional[int]:
        """Smallest committed offset across registered groups; None if no groups."""
        with self._lock:
            groups = self._groups.get(topic, set())
            if not groups:
                return None
            return min(self._committed.get((g, topic, partition), 0) for g in groups)

    def produce(
        self,
        topic: str,
        partition: int,
        record: Record,
        timeout: float = DEFAULT_PRODUCE_TIMEOUT_S,
    ) -> Offset:
        record.validate()
        part = self._part(topic, partition)
        deadline = None
        with part.space:
            while len(part.records) >= part.capacity:
                # Ring full: evict the oldest record only when every registered
                # group has moved past it (or no group is registered at all).
                min_committed = self._min_committed(topic, partition)
                if min_committed is None or min_committed > part.base_offset:
                    part.records.popleft()
                    part.base_offset += 1
                    continue
                if deadline is None:
                    deadline = time.monotonic() + timeout
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise BackpressureTimeout(
                        f"partition {topic}[{partition}] full for {timeout:.1f}s "
                        f"(oldest offset {part.base_offset} uncommitted)"
                    )
                part.space.wait(remaining)
            assigned = part.end_offset
            record.partition = partition
            record.timestamps.append((STAGE_BROKER_IN, now_micros()))
            part.records.append(record)
            part.end_offset += 1
            part.not_empty.notify_all()
        return Offset(topic, partition, assigned)

    # ------------------------------------------------------------ fetch

    def fetch(
        self,
        topic: str,
        partition: int,
        from_offset: int,
        max_records: int,
        timeout: float = 0.0,
    ) -> List[Record]:
        if max_records < 1:
            raise ValueError("max_records must be positive")
        part = self._part(topic, partition)
        with part.not_empty:
            if from_offset > part.end_offset:
                raise OffsetOutOfRange(
                    f"offset {from_offset} beyond log end {part.end_offset} for {topic}[{partition}]"
                )
            if timeout > 0 and from_offset == part.end_offset:
                part.not_empty.wait(timeout)
            if from_offset < part.base_offset:
                raise OffsetOutOfRetention(
                    f"offset {from_offset} evicted from {topic}[{partition}]",
                    oldest_retained=part.base_offset,
                )
            start = from_offset - part.base_offset
            stop = min(start + max_records, len(part.records))
            out = []
            for i in range(start, stop):
                rec = part.records[i]
                out.append(replace(rec, timestamps=list(rec.timestamps)))
            return out

    def end_offset(self, topic: str, partition: int) -> int:
        part = self._part(topic, partition)
        with part.lock:
            return part.end_offset

    # ------------------------------------------------------------ commit

    def commit_offset(self, group: str, offset: Offset) -> None:
        part = self._part(offset.topic, offset.partition)
        with part.lock:
            if offset.value > part.end_offset:
                raise OffsetOutOfRange(
                    f"commit {offset.value} beyond log end {part.end_offset}"
                )
        with self._lock:
            self._groups.setdefault(offset.topic, set()).add(group)
            key = (group, offset.topic, offset.partition)
            current = self._committed.get(key, 0)
            if offset.value > current:
                self._committed[key] = offset.value
        with part.space:
            part.space.notify_all()

    def committed(self, group: str, topic: str, partition: int) -> int:
        self._part(topic, partition)
        with self._lock:
            return self._committed.get((group, topic, partition), 0)

    # ------------------------------------------------------------ groups

    def assign_partitions(self, group: ConsumerGroup, topic: str) -> Dict[int, str]:
        """Deterministic round-robin: partition p goes to sorted members[p % n]."""
        if not group.members:
            raise ValueError("consumer group needs at least one member")
        t = self.topic(topic)
        members = sorted(group.members)
        assignment = {p: members[p % len(members)] for p in range(t.partition_count)}
        group.assignment = assignment
        with self._lock:
            self._groups.setdefault(topic, set()).add(group.group_id)
        return assignment
