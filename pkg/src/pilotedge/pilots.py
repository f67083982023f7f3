"""Pilot abstraction: placeholder resource containers with pluggable backends.

A pilot is a worker pool acquired before any workload is bound to it.
Backends are registered by name; only the local backend ships, running
workers as in-process threads. Handles are thread-safe and expose a
condition-based wait for state transitions.
"""

from __future__ import annotations

import enum
import logging
import os
import queue
import threading
import time
import uuid
from abc import ABC, abstractmethod
from concurrent.futures import Future
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .errors import (
    InvalidPilotState,
    ScaleFailure,
    SpawnFailure,
    StateWaitTimeout,
    UnknownBackend,
    UnsupportedCapability,
)

log = logging.getLogger(__name__)

DEFAULT_DRAIN_S = 5.0


class Tier(str, enum.Enum):
    EDGE = "edge"
    CLOUD = "cloud"


class PilotState(enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    SCALING_UP = "scaling_up"
    SCALING_DOWN = "scaling_down"
    CANCELLED = "cancelled"
    FAILED = "failed"


_TRANSITIONS = {
    PilotState.PENDING: {PilotState.RUNNING, PilotState.FAILED, PilotState.CANCELLED},
    PilotState.RUNNING: {
        PilotState.SCALING_UP,
        PilotState.SCALING_DOWN,
        PilotState.CANCELLED,
        PilotState.FAILED,
    },
    PilotState.SCALING_UP: {PilotState.RUNNING, PilotState.CANCELLED, PilotState.FAILED},
    PilotState.SCALING_DOWN: {PilotState.RUNNING, PilotState.CANCELLED, PilotState.FAILED},
    PilotState.CANCELLED: set(),
    PilotState.FAILED: set(),
}

TERMINAL_STATES = {PilotState.CANCELLED, PilotState.FAILED}


@dataclass
class PilotDescription:
    """Resource container request. worker_memory_mb is advisory, recorded not enforced."""

    tier: Tier
    worker_count: int
    backend_name: str = "local"
    worker_memory_mb: int = 4096
    labels: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")


class PilotHandle:
    """Live view of a pilot: state machine plus worker count."""

    def __init__(self, description: PilotDescription, backend: "ResourceBackend"):
        self.pilot_id = str(uuid.uuid4())
        self.description = description
        self.backend = backend
        self.failure_cause: Optional[BaseException] = None
        self._state = PilotState.PENDING
        self._current_workers = 0
        self._lock = threading.RLock()
        self._changed = threading.Condition(self._lock)
        self._scale_listeners: List[Callable[["PilotHandle"], None]] = []

    @property
    def state(self) -> PilotState:
        with self._lock:
            return self._state

    @property
    def current_workers(self) -> int:
        with self._lock:
            return self._current_workers

    def _transition(self, target: PilotState) -> None:
        with self._changed:
            if target not in _TRANSITIONS[self._state]:
                raise InvalidPilotState(f"cannot go {self._state.value} -> {target.value}")
            self._state = target
            self._changed.notify_all()

    def _set_workers(self, count: int) -> None:
        with self._changed:
            self._current_workers = count
            self._changed.notify_all()

    def add_scale_listener(self, fn: Callable[["PilotHandle"], None]) -> None:
        """Register a callback invoked after a scale completes (pipeline rebalance hook)."""
        with self._lock:
            self._scale_listeners.append(fn)

    def _notify_scale(self) -> None:
        with self._lock:
            listeners = list(self._scale_listeners)
        for fn in listeners:
            try:
                fn(self)
            except Exception:
                log.exception("scale listener failed for pilot %s", self.pilot_id)

    def submit_task(self, fn: Callable, *args, worker_index: int = 0, **kwargs) -> Future:
        """Run fn on one of this pilot's workers; returns a Future."""
        return self.backend.submit(self, worker_index, fn, *args, **kwargs)


class ResourceBackend(ABC):
    """Plugin interface for resource acquisition. One registered backend per name."""

    name: str = ""
    capabilities: frozenset = frozenset()

    @abstractmethod
    def spawn(self, handle: PilotHandle) -> None:
        """Bring up handle.description.worker_count workers; called off-thread."""

    @abstractmethod
    def scale(self, handle: PilotHandle, new_worker_count: int) -> None:
        """Adjust the worker pool to new_worker_count."""

    @abstractmethod
    def stop(self, handle: PilotHandle, drain_s: float) -> None:
        """Stop all workers, draining in-flight tasks for up to drain_s seconds."""

    @abstractmethod
    def submit(self, handle: PilotHandle, worker_index: int, fn: Callable, *args, **kwargs) -> Future:
        """Queue a task on a specific worker."""

    @abstractmethod
    def live_worker_count(self, handle: PilotHandle) -> int:
        """Introspect how many workers are actually live."""


_SENTINEL = object()


class _Worker(threading.Thread):
    """One in-process execution unit with its own task queue."""

    def __init__(self, pilot_id: str, index: int, core: Optional[int]):
        super().__init__(name=f"pilot-{pilot_id[:8]}-w{index}", daemon=True)
        self.index = index
        self.core = core
        self.tasks: "queue.Queue" = queue.Queue()
        self.abandoned = False

    def run(self):
        if self.core is not None:
            try:
                os.sched_setaffinity(0, {self.core})
            except (AttributeError, OSError):
                pass
        while True:
            item = self.tasks.get()
            if item is _SENTINEL:
                return
            fn, args, kwargs, future = item
            if not future.set_running_or_notify_cancel():
                continue
            try:
                future.set_result(fn(*args, **kwargs))
            except BaseException as exc:  # noqa: BLE001 - forwarded via the future
                future.set_exception(exc)

    def stop(self):
        self.tasks.put(_SENTINEL)


class LocalBackend(ResourceBackend):
    """Workers are threads in the current process.

    Optional core pinning (``pin_workers=True`` or label ``pin=1``) assigns
    logical cores round-robin across all pilots of this backend. It is off
    by default: thread affinity is inherited by BLAS worker pools spawned
    from a pinned worker, which can silently serialize unrelated stages.
    """

    name = "local"
    capabilities = frozenset({"spawn", "scale", "cancel"})

    def __init__(self, pin_workers: bool = False):
        self.pin_workers = pin_workers
        self._pools: Dict[str, List[_Worker]] = {}
        self._lock = threading.Lock()
        self._next_core = 0

    def _allocate_core(self) -> Optional[int]:
        ncores = os.cpu_count() or 1
        core = self._next_core % ncores
        self._next_core += 1
        return core

    def _want_pin(self, handle: PilotHandle) -> bool:
        return self.pin_workers or handle.description.labels.get("pin") == "1"

    def _start_worker(self, handle: PilotHandle, index: int) -> _Worker:
        core = self._allocate_core() if self._want_pin(handle) else None
        worker = _Worker(handle.pilot_id, index, core)
        worker.start()
        return worker

    def spawn(self, handle: PilotHandle) -> None:
        with self._lock:
            pool = [self._start_worker(handle, i) for i in range(handle.description.worker_count)]
            self._pools[handle.pilot_id] = pool

    def scale(self, handle: PilotHandle, new_worker_count: int) -> None:
        with self._lock:
            pool = self._pools[handle.pilot_id]
            if new_worker_count > len(pool):
                for i in range(len(pool), new_worker_count):
                    pool.append(self._start_worker(handle, i))
            else:
                while len(pool) > new_worker_count:
                    worker = pool.pop()
                    worker.stop()

    def stop(self, handle: PilotHandle, drain_s: float) -> None:
        with self._lock:
            pool = self._pools.pop(handle.pilot_id, [])
        deadline = time.monotonic() + drain_s
        for worker in pool:
            worker.stop()
        for worker in pool:
            worker.join(max(0.0, deadline - time.monotonic()))
            if worker.is_alive():
                # Cannot kill a thread; mark it abandoned so it no longer counts.
                worker.abandoned = True
                self._drain_queue(worker)

    @staticmethod
    def _drain_queue(worker: _Worker) -> None:
        try:
            while True:
                item = worker.tasks.get_nowait()
                if item is not _SENTINEL:
                    item[3].cancel()
        except queue.Empty:
            pass

    def submit(self, handle: PilotHandle, worker_index: int, fn: Callable, *args, **kwargs) -> Future:
        with self._lock:
            pool = self._pools.get(handle.pilot_id)
            if not pool:
                raise InvalidPilotState(f"pilot {handle.pilot_id} has no workers")
            worker = pool[worker_index % len(pool)]
        future: Future = Future()
        worker.tasks.put((fn, args, kwargs, future))
        return future

    def live_worker_count(self, handle: PilotHandle) -> int:
        with self._lock:
            pool = self._pools.get(handle.pilot_id, [])
            return sum(1 for w in pool if w.is_alive() and not w.abandoned)


# --------------------------------------------------------------- registry

_REGISTRY: Dict[str, ResourceBackend] = {}
_REGISTRY_LOCK = threading.Lock()


def register_backend(backend: ResourceBackend, replace: bool = False) -> None:
    with _REGISTRY_LOCK:
        if backend.name in _REGISTRY and not replace:
            raise ValueError(f"backend {backend.name!r} already registered")
        _REGISTRY[backend.name] = backend


def get_backend(name: str) -> ResourceBackend:
    with _REGISTRY_LOCK:
        try:
            return _REGISTRY[name]
        except KeyError:
            raise UnknownBackend(f"no backend registered under {name!r}") from None


register_backend(LocalBackend())


# --------------------------------------------------------------- operations

def submit_pilot(desc: PilotDescription, spawn_async: bool = True) -> PilotHandle:
    """Request a worker pool; returns a Pending handle that reaches Running.

    The backend spawns workers off-thread. On spawn failure the handle
    transitions to Failed with the cause attached.
    """
    backend = get_backend(desc.backend_name)
    handle = PilotHandle(desc, backend)

    def _spawn():
        try:
            backend.spawn(handle)
            handle._set_workers(desc.worker_count)
            handle._transition(PilotState.RUNNING)
        except BaseException as exc:  # noqa: BLE001 - recorded on the handle
            handle.failure_cause = SpawnFailure(str(exc)) if not isinstance(exc, SpawnFailure) else exc
            try:
                handle._transition(PilotState.FAILED)
            except InvalidPilotState:
                pass

    if spawn_async:
        threading.Thread(target=_spawn, name=f"spawn-{handle.pilot_id[:8]}", daemon=True).start()
    else:
        _spawn()
    return handle


def wait_state(handle: PilotHandle, target: PilotState, timeout: float) -> PilotState:
    """Wait until the handle reaches target; never blocks past timeout.

    Returns early with StateWaitTimeout when a terminal state other than
    the target makes the wait pointless; the error carries the state
    observed last.
    """
    deadline = time.monotonic() + timeout
    with handle._changed:
        while handle._state != target:
            if handle._state in TERMINAL_STATES:
                raise StateWaitTimeout(
                    f"pilot {handle.pilot_id} reached terminal {handle._state.value}, "
                    f"not {target.value}",
                    observed=handle._state,
                )
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise StateWaitTimeout(
                    f"pilot {handle.pilot_id} still {handle._state.value} after {timeout:.1f}s",
                    observed=handle._state,
                )
            handle._changed.wait(remaining)
        return handle._state


def scale_pilot(handle: PilotHandle, new_worker_count: int) -> PilotHandle:
    """Grow or shrink a Running pilot; returns to Running with the new count."""
    if new_worker_count < 1:
        raise ValueError("new_worker_count must be >= 1")
    if "scale" not in handle.backend.capabilities:
        raise UnsupportedCapability(f"backend {handle.backend.name!r} cannot scale")
    with handle._lock:
        if handle._state != PilotState.RUNNING:
            raise InvalidPilotState(f"scale requires Running, pilot is {handle._state.value}")
        old_count = handle._current_workers
        if new_worker_count == old_count:
            return handle
        direction = PilotState.SCALING_UP if new_worker_count > old_count else PilotState.SCALING_DOWN
        handle._transition(direction)
    try:
        handle.backend.scale(handle, new_worker_count)
    except BaseException as exc:  # noqa: BLE001
        handle._set_workers(old_count)
        handle.description.worker_count = old_count
        handle._transition(PilotState.RUNNING)
        raise ScaleFailure(str(exc)) from exc
    handle._set_workers(new_worker_count)
    handle.description.worker_count = new_worker_count
    handle._transition(PilotState.RUNNING)
    handle._notify_scale()
    return handle


def cancel_pilot(handle: PilotHandle, drain_s: float = DEFAULT_DRAIN_S) -> PilotHandle:
    """Stop all workers after a drain window; idempotent once Cancelled."""
    with handle._lock:
        if handle._state == PilotState.CANCELLED:
            return handle
        if handle._state == PilotState.FAILED:
            raise InvalidPilotState("cannot cancel a Failed pilot")
    handle.backend.stop(handle, drain_s)
    with handle._lock:
        if handle._state != PilotState.CANCELLED:
            handle._transition(PilotState.CANCELLED)
        handle._set_workers(0)
    return handle
