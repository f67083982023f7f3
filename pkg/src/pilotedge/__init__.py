"""Edge-to-cloud pipeline runtime: pilots, broker, params, models, benchmarks.

The pieces compose bottom-up: pilots supply worker pools, the broker
moves partitioned records (in process or over TCP with optional WAN
shaping), the parameter store shares versioned model blobs, and the
pipeline wires user handlers across the tiers. Scenarios and the CLI
sit on top for benchmarking.
"""

from .broker import (
    Broker,
    ConsumerGroup,
    Offset,
    Record,
    STAGE_BROKER_IN,
    STAGE_CONSUMED,
    STAGE_PROCESSED,
    STAGE_PRODUCED,
    Topic,
)
from .client import connect_broker, connect_params, register_inproc, unregister_inproc
from .datagen import FEATURE_DIM, GeneratorSpec, PointBlock, generate_block, payload_nbytes
from .errors import PilotEdgeError
from .metrics import MetricSink, RunReport, aggregate, export_csv, read_csv
from .netem import LinkShaper, LinkSpec, LinkTable, identity_link
from .params import ParamStore
from .pilots import (
    LocalBackend,
    PilotDescription,
    PilotHandle,
    PilotState,
    ResourceBackend,
    Tier,
    cancel_pilot,
    get_backend,
    register_backend,
    scale_pilot,
    submit_pilot,
    wait_state,
)
from .pipeline import (
    EdgeToCloudPipeline,
    FunctionContext,
    HandlerRole,
    Placement,
    PipelineConfig,
    build_pipeline,
)
from .scenarios import Scenario, run_scenario, sweep
from .server import BrokerServer

__version__ = "0.1.0"

__all__ = [
    "Broker", "ConsumerGroup", "Offset", "Record", "Topic",
    "STAGE_PRODUCED", "STAGE_BROKER_IN", "STAGE_CONSUMED", "STAGE_PROCESSED",
    "connect_broker", "connect_params", "register_inproc", "unregister_inproc",
    "FEATURE_DIM", "GeneratorSpec", "PointBlock", "generate_block", "payload_nbytes",
    "PilotEdgeError",
    "MetricSink", "RunReport", "aggregate", "export_csv", "read_csv",
    "LinkShaper", "LinkSpec", "LinkTable", "identity_link",
    "ParamStore",
    "LocalBackend", "PilotDescription", "PilotHandle", "PilotState",
    "ResourceBackend", "Tier", "cancel_pilot", "get_backend", "register_backend",
    "scale_pilot", "submit_pilot", "wait_state",
    "EdgeToCloudPipeline", "FunctionContext", "HandlerRole", "Placement",
    "PipelineConfig", "build_pipeline",
    "Scenario", "run_scenario", "sweep",
    "BrokerServer",
    "__version__",
]
