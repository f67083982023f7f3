"""Versioned key-value store for sharing serialized model state.

Single node, in memory. Versions start at 1 and increase by exactly one
per successful write to a key. Writers may pass an expected version for
compare-and-set; readers may long-poll until a minimum version appears.
Blobs are opaque here; the model codec defines their layout.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from .clock import now_micros
from .errors import EmptyBlob, KeyNotFound, ParamWaitTimeout, VersionConflict


@dataclass
class ModelEntry:
    key: str
    version: int
    blob: bytes
    updated_micros: int


class ParamStore:
    """Thread-safe store; per-key writes serialized, reads concurrent."""

    def __init__(self):
        self._entries: Dict[str, ModelEntry] = {}
        self._lock = threading.Lock()
        self._changed = threading.Condition(self._lock)

    def put_model(self, key: str, blob: bytes, expected_version: Optional[int] = None) -> int:
        if not blob:
            raise EmptyBlob(f"refusing empty blob for key {key!r}")
        with self._changed:
            entry = self._entries.get(key)
            current = entry.version if entry else 0
            if expected_version is not None and expected_version != current:
                raise VersionConflict(
                    f"key {key!r} at version {current}, expected {expected_version}",
                    current_version=current,
                )
            new_version = current + 1
            self._entries[key] = ModelEntry(key, new_version, blob, now_micros())
            self._changed.notify_all()
            return new_version

    def get_model(
        self,
        key: str,
        min_version: Optional[int] = None,
        timeout: float = 0.0,
    ) -> Tuple[bytes, int]:
        deadline = time.monotonic() + timeout if timeout > 0 else None
        with self._changed:
            while True:
                entry = self._entries.get(key)
                if entry is not None and (min_version is None or entry.version >= min_version):
                    return entry.blob, entry.version
                if min_version is None or deadline is None:
                    break
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ParamWaitTimeout(
                        f"key {key!r} did not reach version {min_version} in {timeout:.1f}s"
                    )
                self._changed.wait(remaining)
        if entry is None:
            raise KeyNotFound(f"no entry for key {key!r}")
        raise ParamWaitTimeout(
            f"key {key!r} at version {entry.version}, wanted {min_version} (no wait requested)"
        )

    def version(self, key: str) -> int:
        """Current version of a key, 0 if absent."""
        with self._lock:
            entry = self._entries.get(key)
            return entry.version if entry else 0
