"""
A full pipeline run with a handler swap in the middle
=====================================================

Producers on an edge pilot push point batches through the broker to
cloud consumers. Handlers are versioned slots: swapping one takes
effect at each task's next message, and the metric rows record which
version processed every record.
"""

import threading
import time

import numpy as np

from pilotedge.broker import Broker
from pilotedge.client import register_inproc, unregister_inproc
from pilotedge.params import ParamStore
from pilotedge.pilots import PilotDescription, PilotState, Tier, cancel_pilot, submit_pilot, wait_state
from pilotedge.pipeline import HandlerRole, PipelineConfig, build_pipeline

# three pilots: edge producers, cloud processors, and a broker host
pilots = [
    submit_pilot(PilotDescription(tier=Tier.EDGE, worker_count=2)),
    submit_pilot(PilotDescription(tier=Tier.CLOUD, worker_count=2)),
    submit_pilot(PilotDescription(tier=Tier.CLOUD, worker_count=1)),
]
for pilot in pilots:
    wait_state(pilot, PilotState.RUNNING, timeout=10.0)

endpoint = register_inproc("demo", Broker(), ParamStore())


def produce(ctx):
    seq = ctx.task_state.setdefault("seq", 0)
    ctx.task_state["seq"] = seq + 1
    return np.random.default_rng((ctx.partition_index, seq)).normal(size=(40, 32))


def mean_watcher(ctx, points):
    time.sleep(0.004)  # stand-in for real scoring work


config = PipelineConfig(
    pilot_edge=pilots[0],
    pilot_cloud_processing=pilots[1],
    pilot_cloud_broker=pilots[2],
    produce_handler=produce,
    cloud_handler=mean_watcher,
    partitions=2,
    messages_per_producer=30,
    broker_endpoint=endpoint,
    param_endpoint=endpoint,
)
pipeline = build_pipeline(config)
print(f"job {pipeline.job_id[:8]} over topic {pipeline.topic}")
for placement in pipeline.placements:
    print(f"  {placement.role.value:13s} partition {placement.partition} -> worker {placement.worker_index}")

# run in the background, swap the cloud handler once work is flowing
result = {}
runner = threading.Thread(target=lambda: result.setdefault("report", pipeline.run()))
runner.start()
while sum(1 for r in pipeline.sink.snapshot(pipeline.job_id) if r.processed_us) < 10:
    time.sleep(0.001)
new_version = pipeline.swap_handler(HandlerRole.CLOUD_PROCESS, mean_watcher)
print(f"swapped cloud handler to version {new_version} mid-run")
runner.join()

report = result["report"]
print(f"complete chains {report.complete_chains}, lost {report.lost}, ok={report.ok}")
for partition in range(2):
    versions = [
        r.handler_version
        for r in sorted(pipeline.sink.snapshot(pipeline.job_id), key=lambda r: r.message_id)
        if r.partition == partition and r.processed_us
    ]
    flips = sum(a != b for a, b in zip(versions, versions[1:]))
    print(f"partition {partition}: versions {versions[0]}->{versions[-1]}, {flips} cutover(s)")

unregister_inproc("demo")
for pilot in pilots:
    cancel_pilot(pilot)
