"""Process-wide clock: monotonic, anchored to the epoch once at import.

All stage timestamps in one process come from this single domain, so
chains recorded within a process are guaranteed non-decreasing even if
the wall clock steps.
"""

import time

_EPOCH_ANCHOR_NS = time.time_ns() - time.monotonic_ns()


def now_micros() -> int:
    """Current time in microseconds since the epoch, monotonic within the process."""
    return (time.monotonic_ns() + _EPOCH_ANCHOR_NS) // 1000


def now_seconds() -> float:
    """Monotonic seconds, for durations and the link shaper."""
    return time.monotonic()
