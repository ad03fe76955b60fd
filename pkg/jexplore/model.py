from enum import Enum
from typing import Annotated, Final, Iterable, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

PROTOCOL_VERSION: Final = 1

MeterName = Literal["time", "power", "memory"]
DeviceKind = Literal["sim", "jetson-orin"]
SampleStatus = Literal["ok", "error", "timeout"]

NonNegativeFinite = Annotated[float, Field(ge=0, allow_inf_nan=False)]
PositiveFinite = Annotated[float, Field(gt=0, allow_inf_nan=False)]

METER_NAMES: Final[tuple[MeterName, ...]] = ("time", "power", "memory")


class Configuration(BaseModel):
    """Represents one point of the Jetson Orin configuration space.

    Frequencies are given in kHz. Grid membership is checked by
    :py:meth:`jexplore.space.ConfigSpace.validate`.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    cores_c1: int
    cores_c2: int
    cores_c3: int
    freq_c1_khz: int
    freq_c2_khz: int
    freq_c3_khz: int
    gpu_freq_khz: int
    emc_freq_khz: int


CONFIG_FIELDS: Final[tuple[str, ...]] = tuple(Configuration.model_fields)


class MeterSet(BaseModel):
    """Selects the meters which are active on a client."""

    model_config = ConfigDict(frozen=True)

    time_enabled: bool = True
    power_enabled: bool = True
    memory_enabled: bool = True
    power_sample_interval_ms: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_any_enabled(self) -> "MeterSet":
        if not (self.time_enabled or self.power_enabled or self.memory_enabled):
            raise ValueError("at least one meter must be enabled")
        return self

    @classmethod
    def from_names(
        cls, names: Iterable[str], power_sample_interval_ms: int = 100
    ) -> "MeterSet":
        """Create a meter set from names like ``["time", "power"]``."""
        selected = set(names)
        unknown = selected.difference(METER_NAMES)
        if unknown:
            raise ValueError(f"unknown meters: {', '.join(sorted(unknown))}")
        return cls(
            time_enabled="time" in selected,
            power_enabled="power" in selected,
            memory_enabled="memory" in selected,
            power_sample_interval_ms=power_sample_interval_ms,
        )

    def enabled(self) -> tuple[MeterName, ...]:
        """Names of the enabled meters in canonical order."""
        flags = (self.time_enabled, self.power_enabled, self.memory_enabled)
        return tuple(name for name, on in zip(METER_NAMES, flags) if on)


class MessageType(str, Enum):
    HELLO = "HELLO"
    CONFIG = "CONFIG"
    RESULT = "RESULT"
    BYE = "BYE"
    ERR = "ERR"


class HelloPayload(BaseModel):
    """Sent once by a client after the host connected."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    client_id: str = Field(min_length=1)
    protocol_version: int = PROTOCOL_VERSION
    device: DeviceKind
    meters: tuple[MeterName, ...]


class WorkloadSpec(BaseModel):
    """Names the workload and its software parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    params: dict[str, str] = Field(default_factory=dict)


class ConfigPayload(BaseModel):
    """A configuration pushed from the host to a client."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_id: str = Field(min_length=1)
    config: Configuration
    workload: WorkloadSpec


class Metrics(BaseModel):
    """Measured metrics of one sample."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    time_s: Optional[NonNegativeFinite] = None
    power_w: Optional[PositiveFinite] = None
    memory_mb: Optional[NonNegativeFinite] = None


class ResultPayload(BaseModel):
    """The outcome of one sample, pushed from a client to the host."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_id: str = Field(min_length=1)
    status: SampleStatus
    metrics: Optional[Metrics] = None
    error_msg: Optional[str] = None

    @model_validator(mode="after")
    def _check_status(self) -> "ResultPayload":
        if self.status == "ok" and self.metrics is None:
            raise ValueError("status 'ok' requires metrics")
        if self.status != "ok" and not self.error_msg:
            raise ValueError(f"status '{self.status}' requires an error_msg")
        return self


class ByePayload(BaseModel):
    """Ends a session."""

    model_config = ConfigDict(frozen=True, extra="forbid")


class ErrPayload(BaseModel):
    """Reports a fatal protocol problem before disconnecting."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    message: str = Field(min_length=1)


Payload = Union[HelloPayload, ConfigPayload, ResultPayload, ByePayload, ErrPayload]

PAYLOAD_TYPES: Final[dict[MessageType, type[BaseModel]]] = {
    MessageType.HELLO: HelloPayload,
    MessageType.CONFIG: ConfigPayload,
    MessageType.RESULT: ResultPayload,
    MessageType.BYE: ByePayload,
    MessageType.ERR: ErrPayload,
}


class MessageEnvelope(BaseModel):
    """A single protocol message."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    type: MessageType
    seq: int = Field(ge=0)
    payload: Payload

    @model_validator(mode="after")
    def _check_payload_type(self) -> "MessageEnvelope":
        expected = PAYLOAD_TYPES[self.type]
        if type(self.payload) is not expected:
            raise ValueError(
                f"{self.type.value} requires {expected.__name__}, "
                f"got {type(self.payload).__name__}"
            )
        return self


class SampleRecord(BaseModel):
    """Represents one recorded sample of an exploration run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_id: str = Field(min_length=1)
    client_id: str = Field(min_length=1)
    config: Configuration
    time_s: Optional[float] = None
    power_w: Optional[float] = None
    memory_mb: Optional[float] = None
    status: SampleStatus
    timestamp: str

    @model_validator(mode="after")
    def _check_status(self) -> "SampleRecord":
        metrics = (self.time_s, self.power_w, self.memory_mb)
        if self.status == "ok" and all(m is None for m in metrics):
            raise ValueError("status 'ok' requires at least one metric")
        return self

    def metric(self, name: str) -> Optional[float]:
        """Return a metric by its column name (``time_s``, ``power_w``, ...)."""
        if name not in ("time_s", "power_w", "memory_mb"):
            raise KeyError(name)
        return getattr(self, name)
