"""Exception hierarchy shared across the runtime.

Every error that can cross the wire carries a numeric ``code`` so the
TCP layer can map exceptions to ERROR frames and back without losing
the type.
"""


class PilotEdgeError(Exception):
    """Base class for all runtime errors."""

    code = 1


# ---------------------------------------------------------------- pilots

class UnknownBackend(PilotEdgeError):
    code = 10


class SpawnFailure(PilotEdgeError):
    code = 11


class ScaleFailure(PilotEdgeError):
    code = 12


class UnsupportedCapability(PilotEdgeError):
    code = 13


class InvalidPilotState(PilotEdgeError):
    code = 14


class StateWaitTimeout(PilotEdgeError):
    """Raised when wait_state runs out of time; carries the last observed state."""

    code = 15

    def __init__(self, message, observed=None):
        super().__init__(message)
        self.observed = observed


# ---------------------------------------------------------------- broker

class UnknownTopic(PilotEdgeError):
    code = 20


class TopicExistsWithDifferentConfig(PilotEdgeError):
    code = 21


class PartitionOutOfRange(PilotEdgeError):
    code = 22


class OffsetOutOfRetention(PilotEdgeError):
    """Carries the oldest retained offset so consumers can reset."""

    code = 23

    def __init__(self, message, oldest_retained=0):
        super().__init__(message)
        self.oldest_retained = oldest_retained


class BackpressureTimeout(PilotEdgeError):
    code = 24


class OffsetOutOfRange(PilotEdgeError):
    code = 25


# ---------------------------------------------------------------- wire

class WireError(PilotEdgeError):
    code = 30


class TruncatedFrame(WireError):
    code = 31


class UnknownOpCode(WireError):
    code = 32


# ---------------------------------------------------------------- params

class KeyNotFound(PilotEdgeError):
    code = 40


class VersionConflict(PilotEdgeError):
    """Compare-and-set failed; carries the version currently stored."""

    code = 41

    def __init__(self, message, current_version=0):
        super().__init__(message)
        self.current_version = current_version


class EmptyBlob(PilotEdgeError):
    code = 42


class ParamWaitTimeout(PilotEdgeError):
    code = 43


# ---------------------------------------------------------------- models

class DegenerateBatch(PilotEdgeError):
    code = 50


class Uninitialized(PilotEdgeError):
    code = 51


class TooFewPoints(PilotEdgeError):
    code = 52


class Unfitted(PilotEdgeError):
    code = 53


class NonFiniteWeights(PilotEdgeError):
    code = 54


class UnknownModelTag(PilotEdgeError):
    code = 55


class TruncatedBlob(PilotEdgeError):
    code = 56


# ---------------------------------------------------------------- pipeline

class PilotNotRunning(PilotEdgeError):
    code = 60


class BrokerUnreachable(PilotEdgeError):
    code = 61


class HandlerPanic(PilotEdgeError):
    """A user handler raised; carries partition and stage for the report."""

    code = 62

    def __init__(self, message, partition=-1, role=""):
        super().__init__(message)
        self.partition = partition
        self.role = role


# ---------------------------------------------------------------- metrics / cli

class NoCompleteChains(PilotEdgeError):
    code = 70


class SchemaMismatch(PilotEdgeError):
    code = 71


_BY_CODE = {}


def _register_all():
    stack = [PilotEdgeError]
    while stack:
        cls = stack.pop()
        _BY_CODE.setdefault(cls.code, cls)
        stack.extend(cls.__subclasses__())


_register_all()


def error_for_code(code: int, message: str) -> PilotEdgeError:
    """Rebuild the most specific exception class for a wire error code."""
    cls = _BY_CODE.get(code, PilotEdgeError)
    return cls(message)
