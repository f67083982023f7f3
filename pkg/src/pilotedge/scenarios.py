"""Canned benchmark scenarios: generator on the edge, a detector in the cloud.

A scenario names one cloud-side workload (baseline pass-through,
mini-batch k-means, isolation forest or autoencoder), the stream shape
(partitions, points per message, message count) and an optional WAN link.
Running one allocates three pilots (edge producers, cloud processors,
one broker host), wires the pipeline, executes the configured number of
repeats and writes one metrics CSV per repeat plus a merged summary.

Model state is shared through the parameter store with optimistic
versioning: each cloud task updates its local copy, then tries a
compare-and-set put; on conflict it adopts the stored winner.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import uuid
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .broker import Broker
from .client import register_inproc, unregister_inproc
from .datagen import FEATURE_DIM, GeneratorSpec, generate_block
from .errors import KeyNotFound, PilotEdgeError, VersionConflict
from .metrics import RunReport, export_csv
from .models import (
    KMeansState,
    ae_forward,
    ae_init,
    ae_train_step,
    as_points,
    deserialize_state,
    iforest_fit,
    iforest_scores,
    kmeans_distances,
    kmeans_update,
    serialize_state,
)
from .netem import LinkSpec, LinkTable
from .params import ParamStore
from .pilots import (
    PilotDescription,
    PilotHandle,
    PilotState,
    Tier,
    cancel_pilot,
    submit_pilot,
    wait_state,
)
from .pipeline import PipelineConfig, build_pipeline
from .server import BrokerServer

log = logging.getLogger(__name__)

MODEL_NAMES = ("baseline", "kmeans", "iforest", "autoencoder")
TRANSPORTS = ("inproc", "tcp")

SUMMARY_HEADER = (
    "scenario,partitions,points,messages,repeat,complete_chains,payload_bytes,"
    "wall_time_s,throughput_mb_s,p50_ms,p95_ms,p99_ms,mean_ms,ok"
)

DEFAULT_SWEEP_SIZES = (25, 100, 1000, 10000)


@dataclass
class Scenario:
    """One benchmark cell; every field has a sensible default."""

    name: str = "baseline"
    partitions: int = 1
    points_per_message: int = 25
    messages: int = 512
    wan: Optional[LinkSpec] = None
    seed: int = 7
    repeats: int = 3
    out_dir: str = "results"
    transport: str = "inproc"
    cluster_count: int = 25
    outlier_fraction: float = 0.05
    ae_passes: int = 16
    ae_batch: int = 256
    iforest_refit_every: int = 2

    def validate(self) -> None:
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown scenario {self.name!r}, expected one of {MODEL_NAMES}")
        if self.transport not in TRANSPORTS:
            raise ValueError(f"unknown transport {self.transport!r}")
        if not 1 <= self.points_per_message <= 10 ** 6:
            raise ValueError("points_per_message must be in [1, 10^6]")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.messages < 0:
            raise ValueError("messages must be >= 0")

    def slug(self) -> str:
        return f"{self.name}_p{self.partitions}_pts{self.points_per_message}"


# ---------------------------------------------------------------- handlers

def make_produce_handler(scenario: Scenario) -> Callable:
    """Producer: deterministic labelled blocks keyed by (partition, seq)."""
    gen = GeneratorSpec(
        seed=scenario.seed,
        cluster_count=scenario.cluster_count,
        outlier_fraction=scenario.outlier_fraction,
    )
    points = scenario.points_per_message

    def produce(ctx):
        seq = ctx.task_state.get("seq", 0)
        ctx.task_state["seq"] = seq + 1
        return generate_block(gen, points, index=(ctx.partition_index, seq))

    return produce


def _cas_put(ctx, key: str, state) -> Tuple[object, int]:
    """Optimistic put: on a version race, adopt the stored winner."""
    version = ctx.task_state.get("version", 0)
    try:
        version = ctx.params().put_model(key, serialize_state(state), expected_version=version)
    except VersionConflict:
        blob, version = ctx.params().get_model(key)
        state = deserialize_state(blob)
    ctx.task_state["version"] = version
    return state, version


def _load_shared(ctx, key: str):
    try:
        blob, version = ctx.params().get_model(key)
    except KeyNotFound:
        return None
    ctx.task_state["version"] = version
    return deserialize_state(blob)


def _baseline_handler(ctx, data):
    return None


def _kmeans_handler(scenario: Scenario) -> Callable:
    key = "kmeans"

    def handle(ctx, data):
        model = ctx.task_state.get("model")
        if model is None:
            model = _load_shared(ctx, key)
        if model is None:
            model = KMeansState(k=scenario.cluster_count, seed=scenario.seed)
        kmeans_update(model, data)
        scores = kmeans_distances(model, data)
        model, _ = _cas_put(ctx, key, model)
        ctx.task_state["model"] = model
        return scores

    return handle


def _iforest_handler(scenario: Scenario) -> Callable:
    key = "iforest"
    refit_every = max(1, scenario.iforest_refit_every)

    def handle(ctx, data):
        st = ctx.task_state
        count = st.get("count", 0)
        model = st.get("model")
        if model is None:
            model = _load_shared(ctx, key)
        if model is None or (count > 0 and count % refit_every == 0):
            model = iforest_fit(
                data, seed=scenario.seed * 1000 + ctx.partition_index
            )
            model, _ = _cas_put(ctx, key, model)
        st["model"] = model
        st["count"] = count + 1
        return iforest_scores(model, data)

    return handle


def _autoencoder_handler(scenario: Scenario) -> Callable:
    key = "autoencoder"
    passes = max(1, scenario.ae_passes)
    batch = max(1, scenario.ae_batch)

    def handle(ctx, data):
        model = ctx.task_state.get("model")
        if model is None:
            model = _load_shared(ctx, key)
        if model is None:
            model = ae_init(seed=scenario.seed)
        points = as_points(data)
        for _ in range(passes):
            for start in range(0, len(points), batch):
                ae_train_step(model, points[start : start + batch])
        _, errors = ae_forward(model, data)
        model, _ = _cas_put(ctx, key, model)
        ctx.task_state["model"] = model
        return errors

    return handle


def make_cloud_handler(scenario: Scenario) -> Callable:
    if scenario.name == "baseline":
        return _baseline_handler
    if scenario.name == "kmeans":
        return _kmeans_handler(scenario)
    if scenario.name == "iforest":
        return _iforest_handler(scenario)
    if scenario.name == "autoencoder":
        return _autoencoder_handler(scenario)
    raise ValueError(f"unknown scenario {scenario.name!r}")


# ---------------------------------------------------------------- execution

@dataclass
class RepeatOutcome:
    index: int
    report: Optional[RunReport] = None
    csv_path: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None and self.report.ok


@dataclass
class ScenarioRun:
    scenario: Scenario
    outcomes: List[RepeatOutcome] = field(default_factory=list)
    summary_path: Optional[str] = None

    @property
    def ok(self) -> bool:
        return bool(self.outcomes) and all(o.ok for o in self.outcomes)

    def reports(self) -> List[RunReport]:
        return [o.report for o in self.outcomes if o.report is not None]


def _allocate_pilots(partitions: int) -> Tuple[PilotHandle, PilotHandle, PilotHandle]:
    edge = submit_pilot(PilotDescription(tier=Tier.EDGE, worker_count=partitions))
    cloud = submit_pilot(PilotDescription(tier=Tier.CLOUD, worker_count=max(partitions, 4)))
    broker_host = submit_pilot(PilotDescription(tier=Tier.CLOUD, worker_count=1))
    for handle in (edge, cloud, broker_host):
        wait_state(handle, PilotState.RUNNING, timeout=10.0)
    return edge, cloud, broker_host


class _Services:
    """Broker and parameter endpoints for one repeat, either transport."""

    def __init__(self, scenario: Scenario, broker_pilot: PilotHandle):
        self.links = LinkTable()
        if scenario.wan is not None:
            spec = dataclasses.replace(
                scenario.wan, applies_to=(Tier.EDGE.value, Tier.CLOUD.value)
            )
            self.links.install(spec, seed=scenario.seed)
        self._server: Optional[BrokerServer] = None
        self._inproc_name: Optional[str] = None
        if scenario.transport == "tcp":
            future = broker_pilot.submit_task(lambda: BrokerServer().start())
            self._server = future.result(timeout=10.0)
            self.broker_endpoint = self._server.endpoint
            self.param_endpoint = self._server.endpoint
        else:
            name = f"svc-{uuid.uuid4().hex[:12]}"
            register_inproc(name, Broker(), ParamStore())
            self._inproc_name = name
            self.broker_endpoint = f"inproc://{name}"
            self.param_endpoint = f"inproc://{name}"

    def close(self) -> None:
        if self._server is not None:
            self._server.stop()
        if self._inproc_name is not None:
            unregister_inproc(self._inproc_name)


def _run_once(scenario: Scenario, pilots, out_dir: str, repeat: int) -> RepeatOutcome:
    edge, cloud, broker_host = pilots
    services = _Services(scenario, broker_host)
    try:
        config = PipelineConfig(
            pilot_edge=edge,
            pilot_cloud_processing=cloud,
            pilot_cloud_broker=broker_host,
            produce_handler=make_produce_handler(scenario),
            cloud_handler=make_cloud_handler(scenario),
            partitions=scenario.partitions,
            messages_per_producer=scenario.messages,
            points_per_message=scenario.points_per_message,
            user_config={"feature_dim": str(FEATURE_DIM)},
            broker_endpoint=services.broker_endpoint,
            param_endpoint=services.param_endpoint,
            links=services.links,
        )
        pipeline = build_pipeline(config)
        report = pipeline.run()
        csv_path = os.path.join(out_dir, f"{scenario.slug()}_r{repeat}.csv")
        export_csv(pipeline.sink.snapshot(pipeline.job_id), csv_path, report)
        outcome = RepeatOutcome(index=repeat, report=report, csv_path=csv_path)
        if not report.ok:
            outcome.error = f"failed partitions {report.failed_partitions}, lost {report.lost}"
        return outcome
    except PilotEdgeError as exc:
        log.error("repeat %d failed: %s", repeat, exc)
        return RepeatOutcome(index=repeat, error=str(exc))
    finally:
        services.close()


def _summary_row(scenario: Scenario, label, report: Optional[RunReport], ok: bool) -> str:
    if report is None:
        return (
            f"{scenario.name},{scenario.partitions},{scenario.points_per_message},"
            f"{scenario.messages},{label},0,0,0.0,0.0,0.0,0.0,0.0,0.0,{str(ok).lower()}"
        )
    lat = report.latency_ms
    return (
        f"{scenario.name},{scenario.partitions},{scenario.points_per_message},"
        f"{scenario.messages},{label},{report.complete_chains},{report.payload_bytes_total},"
        f"{report.wall_time_s!r},{report.throughput_mb_s!r},"
        f"{lat.get('p50', 0.0)!r},{lat.get('p95', 0.0)!r},{lat.get('p99', 0.0)!r},"
        f"{lat.get('mean', 0.0)!r},{str(ok).lower()}"
    )


def _write_summary(scenario: Scenario, outcomes: List[RepeatOutcome], out_dir: str) -> str:
    path = os.path.join(out_dir, f"{scenario.slug()}_summary.csv")
    lines = [SUMMARY_HEADER]
    for o in outcomes:
        lines.append(_summary_row(scenario, o.index, o.report, o.ok))
    good = [o.report for o in outcomes if o.ok]
    if good:
        throughputs = np.array([r.throughput_mb_s for r in good])
        p50s = np.array([r.latency_ms.get("p50", 0.0) for r in good])
        mean_report = RunReport(
            job_id="",
            complete_chains=int(np.mean([r.complete_chains for r in good])),
            payload_bytes_total=int(np.mean([r.payload_bytes_total for r in good])),
            wall_time_s=float(np.mean([r.wall_time_s for r in good])),
            throughput_mb_s=float(throughputs.mean()),
            latency_ms={
                "p50": float(p50s.mean()),
                "p95": float(np.mean([r.latency_ms.get("p95", 0.0) for r in good])),
                "p99": float(np.mean([r.latency_ms.get("p99", 0.0) for r in good])),
                "mean": float(np.mean([r.latency_ms.get("mean", 0.0) for r in good])),
            },
        )
        std_report = RunReport(
            job_id="",
            wall_time_s=float(np.std([r.wall_time_s for r in good])),
            throughput_mb_s=float(throughputs.std()),
            latency_ms={
                "p50": float(p50s.std()),
                "p95": float(np.std([r.latency_ms.get("p95", 0.0) for r in good])),
                "p99": float(np.std([r.latency_ms.get("p99", 0.0) for r in good])),
                "mean": float(np.std([r.latency_ms.get("mean", 0.0) for r in good])),
            },
        )
        lines.append(_summary_row(scenario, "mean", mean_report, True))
        lines.append(_summary_row(scenario, "std", std_report, True))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def run_scenario(scenario: Scenario, out_dir: Optional[str] = None) -> ScenarioRun:
    """Allocate pilots, run every repeat, write artifacts, free the pilots."""
    scenario.validate()
    out_dir = out_dir if out_dir is not None else scenario.out_dir
    os.makedirs(out_dir, exist_ok=True)

    pilots = _allocate_pilots(scenario.partitions)
    run = ScenarioRun(scenario=scenario)
    try:
        for repeat in range(scenario.repeats):
            run.outcomes.append(_run_once(scenario, pilots, out_dir, repeat))
    finally:
        for handle in pilots:
            try:
                cancel_pilot(handle)
            except PilotEdgeError:
                pass
    run.summary_path = _write_summary(scenario, run.outcomes, out_dir)
    return run


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("message_size", "partitions", "model")

SWEEP_HEADER = (
    "axis,value,scenario,partitions,points,messages,repeats_ok,"
    "throughput_mb_s_mean,throughput_mb_s_std,p50_ms_mean,p50_ms_std,ok"
)


def _cell_scenario(base: Scenario, axis: str, value) -> Scenario:
    if axis == "message_size":
        return dataclasses.replace(base, points_per_message=int(value))
    if axis == "partitions":
        return dataclasses.replace(base, partitions=int(value))
    if axis == "model":
        return dataclasses.replace(base, name=str(value))
    raise ValueError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")


def sweep(axis: str, values: Sequence, base: Scenario,
          out_dir: Optional[str] = None) -> Tuple[List[Dict], str]:
    """Run one scenario per axis value; failures mark the row, not the sweep."""
    base.validate()
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    out_dir = out_dir if out_dir is not None else base.out_dir
    os.makedirs(out_dir, exist_ok=True)

    rows: List[Dict] = []
    for value in values:
        cell = _cell_scenario(base, axis, value)
        try:
            result = run_scenario(cell, out_dir)
        except (PilotEdgeError, ValueError) as exc:
            log.error("sweep cell %s=%r failed: %s", axis, value, exc)
            rows.append({
                "axis": axis, "value": value, "scenario": cell.name,
                "partitions": cell.partitions, "points": cell.points_per_message,
                "messages": cell.messages, "repeats_ok": 0,
                "throughput_mb_s_mean": 0.0, "throughput_mb_s_std": 0.0,
                "p50_ms_mean": 0.0, "p50_ms_std": 0.0, "ok": False,
            })
            continue
        good = [o.report for o in result.outcomes if o.ok]
        throughputs = np.array([r.throughput_mb_s for r in good]) if good else np.zeros(0)
        p50s = np.array([r.latency_ms.get("p50", 0.0) for r in good]) if good else np.zeros(0)
        rows.append({
            "axis": axis, "value": value, "scenario": cell.name,
            "partitions": cell.partitions, "points": cell.points_per_message,
            "messages": cell.messages, "repeats_ok": len(good),
            "throughput_mb_s_mean": float(throughputs.mean()) if good else 0.0,
            "throughput_mb_s_std": float(throughputs.std()) if good else 0.0,
            "p50_ms_mean": float(p50s.mean()) if good else 0.0,
            "p50_ms_std": float(p50s.std()) if good else 0.0,
            "ok": result.ok,
        })

    table_path = os.path.join(out_dir, f"sweep_{axis}.csv")
    with open(table_path, "w") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for row in rows:
            fh.write(
                f"{row['axis']},{row['value']},{row['scenario']},{row['partitions']},"
                f"{row['points']},{row['messages']},{row['repeats_ok']},"
                f"{row['throughput_mb_s_mean']!r},{row['throughput_mb_s_std']!r},"
                f"{row['p50_ms_mean']!r},{row['p50_ms_std']!r},{str(row['ok']).lower()}\n"
            )
    return rows, table_path
