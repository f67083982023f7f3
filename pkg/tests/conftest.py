"""Shared fixtures: throwaway pilots, in-process services, TCP servers."""

import uuid
from types import SimpleNamespace

import pytest

from pilotedge.broker import Broker
from pilotedge.client import register_inproc, unregister_inproc
from pilotedge.params import ParamStore
from pilotedge.pilots import (
    PilotDescription,
    PilotState,
    Tier,
    cancel_pilot,
    submit_pilot,
    wait_state,
)
from pilotedge.server import BrokerServer


@pytest.fixture
def make_pilot():
    """Factory for RUNNING pilots; everything spawned is cancelled on teardown."""
    handles = []

    def _make(tier=Tier.CLOUD, workers=1, **kwargs):
        handle = submit_pilot(PilotDescription(tier=tier, worker_count=workers, **kwargs))
        wait_state(handle, PilotState.RUNNING, timeout=10.0)
        handles.append(handle)
        return handle

    yield _make
    for handle in handles:
        if handle.state not in (PilotState.CANCELLED, PilotState.FAILED):
            cancel_pilot(handle, drain_s=2.0)


@pytest.fixture
def services():
    """A fresh broker + parameter store pair reachable via an inproc endpoint."""
    name = f"test-{uuid.uuid4().hex[:8]}"
    broker = Broker()
    params = ParamStore()
    endpoint = register_inproc(name, broker, params)
    yield SimpleNamespace(broker=broker, params=params, endpoint=endpoint)
    unregister_inproc(name)


@pytest.fixture
def tcp_server():
    """A broker server on an ephemeral loopback port."""
    server = BrokerServer().start()
    yield server
    server.stop()
