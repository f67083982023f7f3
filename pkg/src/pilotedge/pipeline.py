"""Three-stage edge-to-cloud pipeline over pilots, broker and params.

One producer task per partition runs on the edge pilot; it calls the
produce handler, applies the edge handler in-line (identity by default),
stamps the record and produces it to the partition. One consumer task
per partition runs on the cloud processing pilot; it fetches, invokes
the cloud handler, records metrics and commits the offset afterwards,
giving at-least-once delivery.

Handlers live in versioned slots and are re-read at every message
boundary, so a swap takes effect exactly once per partition: every
record before the cutover sees the old version, every record from the
cutover on sees the new one. A handler exception aborts the whole run
(fail-fast) and the report marks the partition as failed.
"""

from __future__ import annotations

import enum
import logging
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .broker import (
    Record,
    STAGE_BROKER_IN,
    STAGE_CONSUMED,
    STAGE_PROCESSED,
    STAGE_PRODUCED,
)
from .client import BrokerClient, ParamClient, connect_broker, connect_params
from .clock import now_micros
from .datagen import PointBlock
from .errors import (
    HandlerPanic,
    NoCompleteChains,
    PilotEdgeError,
    PilotNotRunning,
)
from .metrics import MetricSink, RunReport, aggregate
from .netem import LinkTable
from .pilots import PilotHandle, PilotState, Tier

log = logging.getLogger(__name__)

FETCH_BATCH = 32
FETCH_POLL_S = 0.25


class HandlerRole(enum.Enum):
    PRODUCE = "produce"
    EDGE_PROCESS = "edge_process"
    CLOUD_PROCESS = "cloud_process"


class HandlerSlot:
    """A swappable handler with a monotonically increasing version."""

    def __init__(self, role: HandlerRole, handler: Callable):
        self.role = role
        self._handler = handler
        self._version = 1
        self._lock = threading.Lock()

    def read(self) -> Tuple[Callable, int]:
        with self._lock:
            return self._handler, self._version

    def swap(self, handler: Callable) -> int:
        with self._lock:
            self._handler = handler
            self._version += 1
            return self._version

    @property
    def version(self) -> int:
        with self._lock:
            return self._version


@dataclass(frozen=True)
class Placement:
    """Where one task of one role runs for one partition."""

    task_id: str
    role: HandlerRole
    pilot_id: str
    worker_index: int
    partition: int


@dataclass
class FunctionContext:
    """Everything a handler may touch: identity, topology and services."""

    job_id: str
    topology: Dict[str, str]
    broker_endpoint: str
    param_endpoint: str
    user_config: Dict[str, str] = field(default_factory=dict)
    partition_index: int = -1
    task_state: dict = field(default_factory=dict)
    metrics: Optional[MetricSink] = None
    links: Optional[LinkTable] = None
    source_tier: str = ""
    _params: Optional[ParamClient] = field(default=None, repr=False)

    def params(self) -> ParamClient:
        """Parameter-store client for this task, opened lazily and cached."""
        if self._params is None:
            self._params = connect_params(
                self.param_endpoint, self.links,
                src_tier=self.source_tier, dst_tier=Tier.CLOUD.value,
            )
        return self._params

    def close(self) -> None:
        if self._params is not None:
            self._params.close()
            self._params = None


def identity_edge_handler(context: FunctionContext, data):
    """Default edge stage: pass the block through untouched."""
    return data


def _to_payload(block) -> bytes:
    """Accept a PointBlock, raw bytes or an array from a handler."""
    if isinstance(block, PointBlock):
        return block.to_payload()
    if isinstance(block, (bytes, bytearray, memoryview)):
        return bytes(block)
    return np.ascontiguousarray(block, dtype="<f8").tobytes()


@dataclass
class PipelineConfig:
    pilot_edge: PilotHandle
    pilot_cloud_processing: PilotHandle
    pilot_cloud_broker: PilotHandle
    produce_handler: Callable
    cloud_handler: Callable
    edge_handler: Callable = identity_edge_handler
    partitions: int = 1
    messages_per_producer: int = 512
    points_per_message: int = 25
    user_config: Dict[str, str] = field(default_factory=dict)
    broker_endpoint: str = ""
    param_endpoint: str = ""
    links: Optional[LinkTable] = None
    metric_sink: Optional[MetricSink] = None
    job_id: Optional[str] = None

    def __post_init__(self):
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.messages_per_producer < 0:
            raise ValueError("messages_per_producer must be >= 0")
        if self.points_per_message < 1:
            raise ValueError("points_per_message must be >= 1")
        if self.produce_handler is None or self.cloud_handler is None:
            raise ValueError("produce and cloud handlers are required")
        roles = {
            id(self.pilot_edge),
            id(self.pilot_cloud_processing),
            id(self.pilot_cloud_broker),
        }
        if len(roles) != 3:
            raise ValueError("the three pilot roles must be distinct pilots")


class EdgeToCloudPipeline:
    """Handle for one wired pipeline; build once, run once."""

    def __init__(self, config: PipelineConfig, job_id: str, placements: List[Placement]):
        self.config = config
        self.job_id = job_id
        self.topic = f"{job_id}-data"
        self.placements = placements
        self.slots = {
            HandlerRole.PRODUCE: HandlerSlot(HandlerRole.PRODUCE, config.produce_handler),
            HandlerRole.EDGE_PROCESS: HandlerSlot(HandlerRole.EDGE_PROCESS, config.edge_handler),
            HandlerRole.CLOUD_PROCESS: HandlerSlot(HandlerRole.CLOUD_PROCESS, config.cloud_handler),
        }
        self.sink = config.metric_sink if config.metric_sink is not None else MetricSink()
        self.state = "ready"
        self._abort = threading.Event()
        self._failed_partitions: List[int] = []
        self._failures: List[BaseException] = []
        self._produced_counts: Dict[int, int] = {}
        self._processed_counts: Dict[int, int] = {}
        self._lock = threading.Lock()

    # -- introspection ------------------------------------------------

    def placements_for(self, role: HandlerRole) -> List[Placement]:
        return [p for p in self.placements if p.role == role]

    def handler_version(self, role: HandlerRole) -> int:
        return self.slots[role].version

    # -- hot swap -----------------------------------------------------

    def swap_handler(self, role: HandlerRole, new_handler: Callable) -> int:
        """Install a new handler; tasks adopt it at their next message."""
        return self.slots[role].swap(new_handler)

    # -- context ------------------------------------------------------

    def _context(self, partition: int, source_tier: str) -> FunctionContext:
        cfg = self.config
        return FunctionContext(
            job_id=self.job_id,
            topology={
                "edge": cfg.pilot_edge.pilot_id,
                "cloud_processing": cfg.pilot_cloud_processing.pilot_id,
                "cloud_broker": cfg.pilot_cloud_broker.pilot_id,
            },
            broker_endpoint=cfg.broker_endpoint,
            param_endpoint=cfg.param_endpoint,
            user_config=dict(cfg.user_config),
            partition_index=partition,
            metrics=self.sink,
            links=cfg.links,
            source_tier=source_tier,
        )

    def _connect(self, source_tier: str) -> BrokerClient:
        return connect_broker(
            self.config.broker_endpoint, self.config.links,
            src_tier=source_tier, dst_tier=Tier.CLOUD.value,
        )

    # -- task bodies --------------------------------------------------

    def _fail(self, exc: BaseException, partition: int) -> None:
        with self._lock:
            self._failures.append(exc)
            if isinstance(exc, HandlerPanic) and partition not in self._failed_partitions:
                self._failed_partitions.append(partition)
        self._abort.set()

    def _producer_task(self, partition: int) -> None:
        job_bytes = uuid.UUID(self.job_id).bytes
        ctx = self._context(partition, Tier.EDGE.value)
        client = self._connect(Tier.EDGE.value)
        produce_slot = self.slots[HandlerRole.PRODUCE]
        edge_slot = self.slots[HandlerRole.EDGE_PROCESS]
        try:
            for seq in range(self.config.messages_per_producer):
                if self._abort.is_set():
                    return
                produce_fn, _ = produce_slot.read()
                edge_fn, _ = edge_slot.read()
                try:
                    block = produce_fn(ctx)
                except PilotEdgeError:
                    raise
                except Exception as exc:
                    raise HandlerPanic(
                        f"produce handler failed: {exc!r}",
                        partition=partition,
                        role=HandlerRole.PRODUCE.value,
                    ) from exc
                try:
                    block = edge_fn(ctx, block)
                except PilotEdgeError:
                    raise
                except Exception as exc:
                    raise HandlerPanic(
                        f"edge handler failed: {exc!r}",
                        partition=partition,
                        role=HandlerRole.EDGE_PROCESS.value,
                    ) from exc
                payload = _to_payload(block)
                ts = now_micros()
                record = Record(
                    job_id=job_bytes,
                    message_id=seq,
                    partition=partition,
                    payload=payload,
                    timestamps=[(STAGE_PRODUCED, ts)],
                )
                self.sink.record_stage(
                    self.job_id, partition, seq, STAGE_PRODUCED, ts,
                    payload_bytes=len(payload),
                )
                client.produce(self.topic, partition, record)
                with self._lock:
                    self._produced_counts[partition] = self._produced_counts.get(partition, 0) + 1
        except BaseException as exc:
            self._fail(exc, partition)
        finally:
            client.close()
            ctx.close()

    def _consumer_task(self, partition: int) -> None:
        ctx = self._context(partition, Tier.CLOUD.value)
        client = self._connect(Tier.CLOUD.value)
        slot = self.slots[HandlerRole.CLOUD_PROCESS]
        target = self.config.messages_per_producer
        next_offset = 0
        try:
            while next_offset < target and not self._abort.is_set():
                records = client.fetch(
                    self.topic, partition, next_offset, FETCH_BATCH,
                    timeout=FETCH_POLL_S,
                )
                for record in records:
                    if self._abort.is_set():
                        return
                    handler, version = slot.read()
                    consumed_ts = now_micros()
                    self.sink.record_stage(
                        self.job_id, partition, record.message_id,
                        STAGE_CONSUMED, consumed_ts,
                    )
                    try:
                        points = PointBlock.from_payload(
                            record.payload, feature_dim=self._feature_dim()
                        )
                        handler(ctx, points)
                    except PilotEdgeError:
                        raise
                    except Exception as exc:
                        raise HandlerPanic(
                            f"cloud handler failed: {exc!r}",
                            partition=partition,
                            role=HandlerRole.CLOUD_PROCESS.value,
                        ) from exc
                    processed_ts = now_micros()
                    self.sink.record_stage(
                        self.job_id, partition, record.message_id,
                        STAGE_PROCESSED, processed_ts, handler_version=version,
                    )
                    broker_in = record.stage_micros(STAGE_BROKER_IN)
                    if broker_in:
                        self.sink.record_stage(
                            self.job_id, partition, record.message_id,
                            STAGE_BROKER_IN, broker_in,
                        )
                    next_offset += 1
                    client.commit("cloud", self.topic, partition, next_offset)
                    with self._lock:
                        self._processed_counts[partition] = self._processed_counts.get(partition, 0) + 1
        except BaseException as exc:
            self._fail(exc, partition)
        finally:
            client.close()
            ctx.close()

    def _feature_dim(self) -> int:
        return int(self.config.user_config.get("feature_dim", "32"))

    # -- run ----------------------------------------------------------

    def run(self) -> RunReport:
        """Execute the pipeline to completion and aggregate the metrics."""
        if self.state != "ready":
            raise PilotEdgeError(f"pipeline is {self.state}, expected ready")
        self.state = "running"
        cfg = self.config

        # Register the consumer group up front so retention eviction cannot
        # outrun consumers that have not committed yet.
        control = self._connect(Tier.CLOUD.value)
        try:
            control.assign(
                "cloud", self.topic,
                [f"consumer-{p}" for p in range(cfg.partitions)],
            )
        finally:
            control.close()

        futures = []
        for placement in self.placements:
            if placement.role == HandlerRole.PRODUCE:
                futures.append(cfg.pilot_edge.submit_task(
                    self._producer_task, placement.partition,
                    worker_index=placement.worker_index,
                ))
            elif placement.role == HandlerRole.CLOUD_PROCESS:
                futures.append(cfg.pilot_cloud_processing.submit_task(
                    self._consumer_task, placement.partition,
                    worker_index=placement.worker_index,
                ))
        for future in futures:
            future.result()

        self.state = "done"
        with self._lock:
            failures = list(self._failures)
            failed_partitions = sorted(self._failed_partitions)
            produced = sum(self._produced_counts.values())
            processed = sum(self._processed_counts.values())

        infra = [f for f in failures if not isinstance(f, HandlerPanic)]
        if infra:
            self.state = "failed"
            raise infra[0]

        try:
            report = aggregate(self.sink.snapshot(self.job_id), job_id=self.job_id)
        except NoCompleteChains:
            report = RunReport(job_id=self.job_id)
        report.partitions = cfg.partitions
        report.produced = produced
        report.processed = processed
        report.lost = produced - processed
        report.failed_partitions = failed_partitions
        report.metric_drops = self.sink.drops
        if failed_partitions:
            self.state = "failed"
        return report

    def shutdown(self) -> None:
        self._abort.set()


def _require_running(handle: PilotHandle, role: str) -> None:
    if handle.state != PilotState.RUNNING:
        raise PilotNotRunning(f"{role} pilot is {handle.state.name}, expected RUNNING")


def compute_placements(config: PipelineConfig, job_id: str) -> List[Placement]:
    """Rule-based placement, a pure function of config and job id.

    Produce and edge-process run on the edge pilot, worker p mod
    edge workers (edge processing is in-line with produce). Cloud
    processing runs on the cloud pilot, worker p mod cloud workers.
    """
    edge_workers = max(1, config.pilot_edge.description.worker_count)
    cloud_workers = max(1, config.pilot_cloud_processing.description.worker_count)
    namespace = uuid.UUID(job_id)
    placements = []
    for p in range(config.partitions):
        edge_worker = p % edge_workers
        placements.append(Placement(
            task_id=str(uuid.uuid5(namespace, f"produce:{p}")),
            role=HandlerRole.PRODUCE,
            pilot_id=config.pilot_edge.pilot_id,
            worker_index=edge_worker,
            partition=p,
        ))
        placements.append(Placement(
            task_id=str(uuid.uuid5(namespace, f"edge_process:{p}")),
            role=HandlerRole.EDGE_PROCESS,
            pilot_id=config.pilot_edge.pilot_id,
            worker_index=edge_worker,
            partition=p,
        ))
        placements.append(Placement(
            task_id=str(uuid.uuid5(namespace, f"cloud_process:{p}")),
            role=HandlerRole.CLOUD_PROCESS,
            pilot_id=config.pilot_cloud_processing.pilot_id,
            worker_index=p % cloud_workers,
            partition=p,
        ))
    return placements


def build_pipeline(config: PipelineConfig) -> EdgeToCloudPipeline:
    """Validate pilots, create the data topic and compute placements."""
    _require_running(config.pilot_edge, "edge")
    _require_running(config.pilot_cloud_processing, "cloud processing")
    _require_running(config.pilot_cloud_broker, "cloud broker")

    job_id = config.job_id if config.job_id else uuid.uuid4().hex
    uuid.UUID(job_id)

    control = connect_broker(
        config.broker_endpoint, config.links,
        src_tier=Tier.CLOUD.value, dst_tier=Tier.CLOUD.value,
    )
    try:
        control.create_topic(f"{job_id}-data", config.partitions)
    finally:
        control.close()

    placements = compute_placements(config, job_id)
    return EdgeToCloudPipeline(config, job_id, placements)
