"""Exceptions raised by jexplore."""

from typing import Iterable, Sequence


class JExploreException(Exception):
    """Base exception for all jexplore errors."""

    prefix = "JExplore Error"

    def __init__(self, msg: str):
        super().__init__(msg)
        self.msg = msg

    def __str__(self):
        return f"{self.prefix}: {self.msg}"


# configuration space


class SpaceException(JExploreException):
    """Base exception for configuration space errors."""

    prefix = "Space Error"


class MembershipException(SpaceException):
    """A configuration value is not on the grid of its parameter."""

    def __init__(self, field: str, value: object):
        super().__init__(f"value {value!r} of '{field}' is not on the grid")
        self.field = field
        self.value = value


class IndexRangeException(SpaceException):
    """A mixed-radix index is outside of [0, cardinality)."""

    def __init__(self, index: int, cardinality: int):
        super().__init__(f"index {index} out of range [0, {cardinality})")
        self.index = index
        self.cardinality = cardinality


class SpaceDefinitionException(SpaceException):
    """A space definition is not usable."""


# protocol


class ProtocolException(JExploreException):
    """Base exception for wire protocol errors."""

    prefix = "Protocol Error"


class FrameTooLargeException(ProtocolException):
    """A frame body exceeds the size limit."""

    def __init__(self, length: int, limit: int):
        super().__init__(f"frame body of {length} bytes exceeds limit of {limit}")
        self.length = length
        self.limit = limit


class IncompleteFrameException(ProtocolException):
    """The stream ended before a complete frame was read."""

    def __init__(self, expected: int, received: int):
        super().__init__(
            f"incomplete frame, expected {expected} bytes but got {received}"
        )
        self.expected = expected
        self.received = received


class FrameParseException(ProtocolException):
    """A frame body is not a valid envelope."""


class UnknownMessageTypeException(ProtocolException):
    """An envelope carries an unknown message type."""

    def __init__(self, message_type: object):
        super().__init__(f"unknown message type {message_type!r}")
        self.message_type = message_type


class ProtocolVersionException(ProtocolException):
    """A peer announced an unsupported protocol version."""

    def __init__(self, version: object, supported: int):
        super().__init__(f"unsupported protocol version {version!r} (!= {supported})")
        self.version = version


class SequenceException(ProtocolException):
    """An envelope arrived with an unexpected sequence number."""

    def __init__(self, expected: int, received: int):
        super().__init__(f"expected seq {expected} but received {received}")
        self.expected = expected
        self.received = received


class RemoteErrorException(ProtocolException):
    """The peer sent an ERR message."""

    def __init__(self, message: str):
        super().__init__(f"peer reported: {message}")
        self.remote_message = message


# device and measurement


class DeviceException(JExploreException):
    """Base exception for device backends."""

    prefix = "Device Error"


class ApplyNotSupportedException(DeviceException):
    """The backend cannot apply configurations."""

    def __init__(self, backend: str, writes: Sequence[str]):
        super().__init__(
            f"{backend} cannot apply configurations, intended writes: "
            + "; ".join(writes)
        )
        self.backend = backend
        self.writes = list(writes)


class WorkloadException(DeviceException):
    """A workload could not be configured or failed to run."""


class MeasurementTimeoutException(DeviceException):
    """A workload run exceeded its time limit."""

    def __init__(self, timeout_s: float):
        super().__init__(f"workload exceeded timeout of {timeout_s} s")
        self.timeout_s = timeout_s


# records


class CsvException(JExploreException):
    """Base exception for result files."""

    prefix = "CSV Error"


class CsvSchemaException(CsvException):
    """The header of a result file does not match the schema."""

    def __init__(self, missing: Iterable[str], extra: Iterable[str]):
        self.missing = list(missing)
        self.extra = list(extra)
        parts = []
        if self.missing:
            parts.append("missing columns: " + ", ".join(self.missing))
        if self.extra:
            parts.append("unexpected columns: " + ", ".join(self.extra))
        super().__init__("; ".join(parts) or "invalid header")


class CsvRowException(CsvException):
    """A row of a result file cannot be parsed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


# host


class HostException(JExploreException):
    """Base exception for exploration runs."""

    prefix = "Host Error"


class NoClientsException(HostException):
    """No client could be connected."""


class ClientIncompatibleException(HostException):
    """A client announced capabilities the plan cannot use."""


class AllClientsLostException(HostException):
    """Every client disconnected before the budget was reached."""

    def __init__(self, recorded: int, budget: int):
        super().__init__(f"all clients lost after {recorded} of {budget} samples")
        self.recorded = recorded
        self.budget = budget


class SearchExhaustedException(HostException):
    """The search algorithm stopped proposing before the budget was reached."""


# analysis


class AnalysisException(JExploreException):
    """Base exception for result analysis."""

    prefix = "Analysis Error"


class InsufficientDataException(AnalysisException):
    """Too few records for an analysis step."""

    def __init__(self, required: int, available: int):
        super().__init__(f"need at least {required} records, got {available}")
        self.required = required
        self.available = available


class AnalysisArgumentException(AnalysisException):
    """Invalid arguments for an analysis function."""


class MetricMissingException(AnalysisException):
    """A record lacks a metric required by the analysis."""

    def __init__(self, sample_id: str, metric: str):
        super().__init__(f"sample {sample_id} has no {metric}")
        self.sample_id = sample_id
        self.metric = metric
