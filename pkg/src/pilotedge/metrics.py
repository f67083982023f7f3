"""End-to-end measurement: per-message timestamp chains and aggregation.

Every message accumulates up to four stage timestamps (produced,
broker_in, consumed, processed) keyed by (job_id, partition, message_id).
Stage writes are non-blocking enqueues into a bounded queue so the data
path is never slowed or failed by measurement; overflow increments a drop
counter that tests treat as a failure.

Wall time and throughput are derived from the chains themselves
(first produced to last processed), which makes every aggregate exactly
recomputable from an exported CSV.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .broker import STAGE_BROKER_IN, STAGE_CONSUMED, STAGE_PRODUCED, STAGE_PROCESSED
from .errors import NoCompleteChains, SchemaMismatch

STAGE_NAMES = {
    STAGE_PRODUCED: "produced",
    STAGE_BROKER_IN: "broker_in",
    STAGE_CONSUMED: "consumed",
    STAGE_PROCESSED: "processed",
}

CSV_HEADER = (
    "job_id,partition,message_id,payload_bytes,"
    "produced_us,broker_in_us,consumed_us,processed_us,handler_version"
)

SUMMARY_PREFIX = "#summary"

# Stage-interval labels used in reports, in chain order.
INTERVAL_NAMES = ("produce_to_broker", "broker_to_consume", "consume_to_processed")


@dataclass
class MetricRecord:
    """One message's timestamp chain; 0 marks a stage not seen."""

    job_id: str
    partition: int
    message_id: int
    payload_bytes: int = 0
    produced_us: int = 0
    broker_in_us: int = 0
    consumed_us: int = 0
    processed_us: int = 0
    handler_version: int = 0

    _STAGE_FIELDS = {
        STAGE_PRODUCED: "produced_us",
        STAGE_BROKER_IN: "broker_in_us",
        STAGE_CONSUMED: "consumed_us",
        STAGE_PROCESSED: "processed_us",
    }

    def is_complete(self) -> bool:
        return min(self.produced_us, self.broker_in_us, self.consumed_us, self.processed_us) > 0

    def latency_us(self) -> int:
        return self.processed_us - self.produced_us


@dataclass
class RunReport:
    """Aggregated view of one pipeline run."""

    job_id: str
    partitions: int = 0
    produced: int = 0
    processed: int = 0
    lost: int = 0
    failed_partitions: List[int] = field(default_factory=list)
    per_partition: Dict[int, int] = field(default_factory=dict)
    complete_chains: int = 0
    payload_bytes_total: int = 0
    wall_time_s: float = 0.0
    throughput_mb_s: float = 0.0
    latency_ms: Dict[str, float] = field(default_factory=dict)
    stage_means_ms: Dict[str, float] = field(default_factory=dict)
    bottleneck_stage: str = ""
    metric_drops: int = 0

    @property
    def ok(self) -> bool:
        return not self.failed_partitions and self.lost == 0


class MetricSink:
    """Collects stage events from any task; aggregation runs on a snapshot."""

    def __init__(self, capacity: int = 1 << 16):
        self._queue: "queue.Queue" = queue.Queue(maxsize=capacity)
        self._table: Dict[Tuple[str, int, int], MetricRecord] = {}
        self._drops = 0
        self._lock = threading.Lock()

    def record_stage(
        self,
        job_id: str,
        partition: int,
        message_id: int,
        stage: int,
        timestamp_us: int,
        payload_bytes: int = 0,
        handler_version: int = 0,
    ) -> None:
        """Never blocks and never raises into the data path."""
        try:
            self._queue.put_nowait((job_id, partition, message_id, stage, timestamp_us, payload_bytes, handler_version))
        except queue.Full:
            self._drops += 1

    def _drain(self) -> None:
        while True:
            try:
                job_id, partition, message_id, stage, ts, nbytes, hv = self._queue.get_nowait()
            except queue.Empty:
                return
            key = (job_id, partition, message_id)
            rec = self._table.get(key)
            if rec is None:
                rec = MetricRecord(job_id=job_id, partition=partition, message_id=message_id)
                self._table[key] = rec
            fname = MetricRecord._STAGE_FIELDS.get(stage)
            if fname is None:
                continue
            # First write wins per (message, stage).
            if getattr(rec, fname) == 0:
                setattr(rec, fname, ts)
                if nbytes:
                    rec.payload_bytes = nbytes
                if stage == STAGE_PROCESSED:
                    rec.handler_version = hv

    def snapshot(self, job_id: Optional[str] = None) -> List[MetricRecord]:
        with self._lock:
            self._drain()
            records = list(self._table.values())
        if job_id is not None:
            records = [r for r in records if r.job_id == job_id]
        return records

    @property
    def drops(self) -> int:
        return self._drops


def aggregate(records: Iterable[MetricRecord], job_id: Optional[str] = None) -> RunReport:
    """Build a RunReport from raw chains; complete chains only feed the stats."""
    records = list(records)
    if job_id is None:
        job_ids = {r.job_id for r in records}
        job_id = records[0].job_id if len(job_ids) == 1 else ""
    chains = [r for r in records if r.job_id == job_id and r.is_complete()] if job_id else [
        r for r in records if r.is_complete()
    ]
    if not chains:
        raise NoCompleteChains("no complete timestamp chains to aggregate")

    latencies_ms = np.array([c.latency_us() for c in chains], dtype=np.float64) / 1000.0
    produce_broker = np.array([c.broker_in_us - c.produced_us for c in chains], dtype=np.float64) / 1000.0
    broker_consume = np.array([c.consumed_us - c.broker_in_us for c in chains], dtype=np.float64) / 1000.0
    consume_processed = np.array([c.processed_us - c.consumed_us for c in chains], dtype=np.float64) / 1000.0

    payload_total = sum(c.payload_bytes for c in chains)
    wall_s = (max(c.processed_us for c in chains) - min(c.produced_us for c in chains)) / 1e6
    throughput = payload_total / wall_s / 1e6 if wall_s > 0 else math.inf

    stage_means = {
        "produce_to_broker": float(produce_broker.mean()),
        "broker_to_consume": float(broker_consume.mean()),
        "consume_to_processed": float(consume_processed.mean()),
    }
    per_partition: Dict[int, int] = {}
    for c in chains:
        per_partition[c.partition] = per_partition.get(c.partition, 0) + 1

    return RunReport(
        job_id=job_id,
        partitions=len(per_partition),
        per_partition=per_partition,
        complete_chains=len(chains),
        payload_bytes_total=payload_total,
        wall_time_s=wall_s,
        throughput_mb_s=throughput,
        latency_ms={
            "p50": float(np.percentile(latencies_ms, 50)),
            "p95": float(np.percentile(latencies_ms, 95)),
            "p99": float(np.percentile(latencies_ms, 99)),
            "mean": float(latencies_ms.mean()),
        },
        stage_means_ms=stage_means,
        bottleneck_stage=max(stage_means, key=stage_means.get),
    )


def export_csv(records: Iterable[MetricRecord], path, report: Optional[RunReport] = None) -> None:
    """Write raw per-message rows plus one summary line; column order is fixed."""
    records = sorted(records, key=lambda r: (r.job_id, r.partition, r.message_id))
    if report is None:
        try:
            report = aggregate(records)
        except NoCompleteChains:
            report = None
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.job_id},{r.partition},{r.message_id},{r.payload_bytes},"
                f"{r.produced_us},{r.broker_in_us},{r.consumed_us},{r.processed_us},{r.handler_version}\n"
            )
        if report is not None:
            fh.write(format_summary_line(report) + "\n")


def format_summary_line(report: RunReport) -> str:
    lat = report.latency_ms
    return (
        f"{SUMMARY_PREFIX},job_id={report.job_id},chains={report.complete_chains},"
        f"payload_bytes={report.payload_bytes_total},wall_time_s={report.wall_time_s!r},"
        f"throughput_mb_s={report.throughput_mb_s!r},p50_ms={lat.get('p50', 0.0)!r},"
        f"p95_ms={lat.get('p95', 0.0)!r},p99_ms={lat.get('p99', 0.0)!r},mean_ms={lat.get('mean', 0.0)!r}"
    )


def parse_summary_line(line: str) -> Dict[str, str]:
    fields = line.strip().split(",")[1:]
    out = {}
    for f in fields:
        k, _, v = f.partition("=")
        out[k] = v
    return out


def read_csv(path) -> Tuple[List[MetricRecord], Optional[Dict[str, str]]]:
    """Re-import an exported CSV; raises SchemaMismatch on a foreign header."""
    records: List[MetricRecord] = []
    summary = None
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise SchemaMismatch(f"unexpected header in {path}: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(SUMMARY_PREFIX):
                summary = parse_summary_line(line)
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise SchemaMismatch(f"row with {len(parts)} columns in {path}")
            records.append(
                MetricRecord(
                    job_id=parts[0],
                    partition=int(parts[1]),
                    message_id=int(parts[2]),
                    payload_bytes=int(parts[3]),
                    produced_us=int(parts[4]),
                    broker_in_us=int(parts[5]),
                    consumed_us=int(parts[6]),
                    processed_us=int(parts[7]),
                    handler_version=int(parts[8]),
                )
            )
    return records, summary
