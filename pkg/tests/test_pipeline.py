"""Pipeline wiring: placement rules, conservation, panics, hot swap."""

import threading
import uuid

import numpy as np
import pytest

from pilotedge.errors import BrokerUnreachable, PilotNotRunning
from pilotedge.pilots import PilotState, Tier, cancel_pilot
from pilotedge.pipeline import (
    HandlerRole,
    PipelineConfig,
    build_pipeline,
    compute_placements,
    identity_edge_handler,
)

JOB = "f8a1c2d4e6b84f0f9c3d5e7a1b2c3d4e"
DIM = 32


def det_points(partition: int, seq: int, n: int = 50) -> np.ndarray:
    rng = np.random.default_rng(partition * 100_000 + seq)
    return rng.normal(size=(n, DIM))


def counting_producer(n_points: int = 50):
    def produce(ctx):
        seq = ctx.task_state.setdefault("seq", 0)
        ctx.task_state["seq"] = seq + 1
        return det_points(ctx.partition_index, seq, n_points)

    return produce


def make_config(make_pilot, services, **overrides):
    defaults = dict(
        pilot_edge=make_pilot(tier=Tier.EDGE, workers=2),
        pilot_cloud_processing=make_pilot(tier=Tier.CLOUD, workers=2),
        pilot_cloud_broker=make_pilot(tier=Tier.CLOUD, workers=1),
        produce_handler=counting_producer(),
        cloud_handler=lambda ctx, points: None,
        broker_endpoint=services.endpoint,
        param_endpoint=services.endpoint,
        job_id=JOB,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


class TestPlacement:
    def test_deterministic_for_fixed_job_id(self, make_pilot, services):
        config = make_config(make_pilot, services, partitions=3)
        first = compute_placements(config, JOB)
        second = compute_placements(config, JOB)
        assert first == second
        assert len(first) == 3 * 3

    def test_task_ids_are_derived_from_job_id(self, make_pilot, services):
        config = make_config(make_pilot, services, partitions=2)
        placements = compute_placements(config, JOB)
        namespace = uuid.UUID(JOB)
        by_key = {(p.role, p.partition): p for p in placements}
        assert by_key[(HandlerRole.PRODUCE, 0)].task_id == str(
            uuid.uuid5(namespace, "produce:0")
        )
        assert by_key[(HandlerRole.CLOUD_PROCESS, 1)].task_id == str(
            uuid.uuid5(namespace, "cloud_process:1")
        )
        other = compute_placements(config, uuid.uuid4().hex)
        assert {p.task_id for p in other}.isdisjoint({p.task_id for p in placements})

    def test_worker_assignment_wraps_round_robin(self, make_pilot, services):
        config = make_config(
            make_pilot,
            services,
            pilot_edge=make_pilot(tier=Tier.EDGE, workers=2),
            pilot_cloud_processing=make_pilot(tier=Tier.CLOUD, workers=3),
            partitions=5,
        )
        placements = compute_placements(config, JOB)
        for p in placements:
            if p.role == HandlerRole.CLOUD_PROCESS:
                assert p.worker_index == p.partition % 3
                assert p.pilot_id == config.pilot_cloud_processing.pilot_id
            else:
                assert p.worker_index == p.partition % 2
                assert p.pilot_id == config.pilot_edge.pilot_id

    def test_produce_and_edge_share_a_worker(self, make_pilot, services):
        config = make_config(make_pilot, services, partitions=4)
        placements = compute_placements(config, JOB)
        for part in range(4):
            pair = {
                (p.pilot_id, p.worker_index)
                for p in placements
                if p.partition == part and p.role != HandlerRole.CLOUD_PROCESS
            }
            assert len(pair) == 1


class TestConfigValidation:
    def test_pilot_roles_must_be_distinct(self, make_pilot, services):
        shared = make_pilot(tier=Tier.CLOUD)
        with pytest.raises(ValueError, match="distinct"):
            make_config(
                make_pilot,
                services,
                pilot_cloud_processing=shared,
                pilot_cloud_broker=shared,
            )

    def test_rejects_zero_partitions(self, make_pilot, services):
        with pytest.raises(ValueError):
            make_config(make_pilot, services, partitions=0)

    def test_build_requires_running_pilots(self, make_pilot, services):
        config = make_config(make_pilot, services)
        cancel_pilot(config.pilot_edge)
        assert config.pilot_edge.state == PilotState.CANCELLED
        with pytest.raises(PilotNotRunning):
            build_pipeline(config)

    def test_build_rejects_malformed_job_id(self, make_pilot, services):
        config = make_config(make_pilot, services, job_id="not-a-job-id")
        with pytest.raises(ValueError):
            build_pipeline(config)

    def test_build_reports_unreachable_broker(self, make_pilot, services):
        config = make_config(
            make_pilot, services, broker_endpoint="tcp://127.0.0.1:1"
        )
        with pytest.raises(BrokerUnreachable):
            build_pipeline(config)


class TestRun:
    def test_small_run_conserves_every_message(self, make_pilot, services):
        config = make_config(
            make_pilot,
            services,
            partitions=2,
            messages_per_producer=8,
            points_per_message=50,
        )
        pipeline = build_pipeline(config)
        report = pipeline.run()
        assert report.ok
        assert report.produced == 16
        assert report.processed == 16
        assert report.lost == 0
        assert report.complete_chains == 16
        assert report.per_partition == {0: 8, 1: 8}
        assert report.failed_partitions == []
        assert report.payload_bytes_total == 16 * 50 * DIM * 8

    def test_zero_messages_yields_empty_report(self, make_pilot, services):
        config = make_config(make_pilot, services, messages_per_producer=0)
        report = build_pipeline(config).run()
        assert report.ok
        assert report.produced == 0
        assert report.processed == 0
        assert report.complete_chains == 0

    def test_cloud_handler_sees_edge_transform(self, make_pilot, services):
        seen = []
        lock = threading.Lock()

        def doubling_edge(ctx, data):
            return data * 2.0

        def collect(ctx, points):
            with lock:
                seen.append((ctx.partition_index, points.copy()))

        config = make_config(
            make_pilot,
            services,
            partitions=1,
            messages_per_producer=3,
            edge_handler=doubling_edge,
            cloud_handler=collect,
        )
        report = build_pipeline(config).run()
        assert report.ok
        assert len(seen) == 3
        # order within one partition is the produce order
        for seq, (partition, data) in enumerate(seen):
            np.testing.assert_array_equal(data, det_points(partition, seq) * 2.0)

    def test_cloud_panic_marks_partition_failed(self, make_pilot, services):
        def fragile(ctx, points):
            if ctx.partition_index == 1:
                raise ValueError("boom")

        config = make_config(
            make_pilot,
            services,
            partitions=2,
            messages_per_producer=6,
            cloud_handler=fragile,
        )
        report = build_pipeline(config).run()
        assert not report.ok
        assert report.failed_partitions == [1]

    def test_produce_panic_marks_partition_failed(self, make_pilot, services):
        def bad_produce(ctx):
            raise RuntimeError("sensor offline")

        config = make_config(
            make_pilot,
            services,
            partitions=1,
            messages_per_producer=4,
            produce_handler=bad_produce,
        )
        report = build_pipeline(config).run()
        assert not report.ok
        assert report.failed_partitions == [0]
        assert report.produced == 0

    def test_run_twice_is_rejected(self, make_pilot, services):
        config = make_config(make_pilot, services, messages_per_producer=1)
        pipeline = build_pipeline(config)
        pipeline.run()
        with pytest.raises(Exception, match="expected ready"):
            pipeline.run()


class TestSwap:
    def test_swap_before_run_raises_recorded_version(self, make_pilot, services):
        config = make_config(make_pilot, services, messages_per_producer=2)
        pipeline = build_pipeline(config)
        assert pipeline.handler_version(HandlerRole.CLOUD_PROCESS) == 1
        version = pipeline.swap_handler(
            HandlerRole.CLOUD_PROCESS, lambda ctx, points: None
        )
        assert version == 2
        report = pipeline.run()
        assert report.ok
        records = pipeline.sink.snapshot(pipeline.job_id)
        versions = {r.handler_version for r in records if r.processed_us}
        assert versions == {2}

    def test_identity_edge_handler_passthrough(self):
        block = object()
        assert identity_edge_handler(None, block) is block
