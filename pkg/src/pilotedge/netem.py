"""WAN link emulation: fixed one-way delay plus bandwidth shaping.

A link keeps a virtual transmission queue: each transfer occupies the
link for payload_bytes*8/bandwidth seconds starting no earlier than the
previous transfer finished, so concurrent transfers share the configured
bandwidth and the aggregate rate never exceeds it (the accounting is
conservative, well within the one-bucket slack the rate bound allows).
Shaping happens at the client transport layer of broker and parameter
connections, not in the OS, so runs are portable and deterministic.
"""

from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

DEFAULT_BUCKET_BYTES = 64 * 1024


@dataclass(frozen=True)
class LinkSpec:
    """One directed link: (source tier, destination tier) with delay and bandwidth."""

    delay_ms: float
    bandwidth_mbit: float
    applies_to: Tuple[str, str]
    jitter_ms: float = 0.0

    def __post_init__(self):
        if self.delay_ms < 0:
            raise ValueError("delay_ms must be >= 0")
        if self.bandwidth_mbit <= 0:
            raise ValueError("bandwidth_mbit must be > 0")
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be >= 0")


def identity_link(applies_to: Tuple[str, str]) -> LinkSpec:
    """Zero delay, effectively infinite bandwidth: the default when nothing is installed."""
    return LinkSpec(delay_ms=0.0, bandwidth_mbit=math.inf, applies_to=applies_to)


class LinkShaper:
    """Shared token-bucket accounting for all connections on one link."""

    def __init__(self, spec: LinkSpec, bucket_bytes: int = DEFAULT_BUCKET_BYTES, seed: int = 0):
        self.spec = spec
        self.bucket_bytes = bucket_bytes
        self._busy_until = 0.0
        self._lock = threading.Lock()
        self._rng = random.Random(seed)

    def shape_transfer(self, payload_bytes: int, now: float) -> float:
        """Delivery time for a transfer of payload_bytes starting at now.

        Serialization takes payload_bytes*8/bandwidth seconds of exclusive
        link time; queued transfers wait for the link to free up. The
        sampled one-way delay is added on top.
        """
        spec = self.spec
        if math.isinf(spec.bandwidth_mbit):
            serialization = 0.0
        else:
            serialization = payload_bytes * 8 / (spec.bandwidth_mbit * 1e6)
        with self._lock:
            start = max(now, self._busy_until)
            end = start + serialization
            self._busy_until = end
            if spec.jitter_ms > 0:
                delay = spec.delay_ms + self._rng.uniform(-spec.jitter_ms, spec.jitter_ms)
            else:
                delay = spec.delay_ms
        return end + delay / 1000.0

    def sleep_until(self, delivery: float) -> None:
        """Block the sending thread until the computed delivery time."""
        while True:
            remaining = delivery - time.monotonic()
            if remaining <= 0:
                return
            time.sleep(min(remaining, 0.05))

    def hold(self, payload_bytes: int) -> None:
        """Shape one transfer starting now and block until its delivery time."""
        self.sleep_until(self.shape_transfer(payload_bytes, time.monotonic()))


def shape_transfer(link: LinkShaper, payload_bytes: int, now: float) -> float:
    return link.shape_transfer(payload_bytes, now)


class LinkTable:
    """Installed links by (source tier, destination tier); last writer wins."""

    def __init__(self):
        self._links: Dict[Tuple[str, str], LinkShaper] = {}
        self._lock = threading.Lock()

    def install(self, spec: LinkSpec, bucket_bytes: int = DEFAULT_BUCKET_BYTES, seed: int = 0) -> LinkShaper:
        shaper = LinkShaper(spec, bucket_bytes=bucket_bytes, seed=seed)
        with self._lock:
            self._links[tuple(spec.applies_to)] = shaper
        return shaper

    def remove(self, applies_to: Tuple[str, str]) -> None:
        with self._lock:
            self._links.pop(tuple(applies_to), None)

    def lookup(self, source_tier: str, dest_tier: str) -> Optional[LinkShaper]:
        with self._lock:
            return self._links.get((source_tier, dest_tier))


def install_link(table: LinkTable, spec: LinkSpec, **kwargs) -> LinkShaper:
    return table.install(spec, **kwargs)
