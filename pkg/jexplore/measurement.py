"""Meters wrapping a workload run."""

from abc import ABC, abstractmethod
import asyncio
import contextlib
import logging
import math
import statistics
import time
from typing import Final, Iterable, Optional

from pydantic import BaseModel, ConfigDict, model_validator

from .exceptions import MeasurementTimeoutException
from .model import MeterSet, Metrics, NonNegativeFinite, PositiveFinite, WorkloadSpec

_logger: Final = logging.getLogger(__name__)


class MeasurementSet(BaseModel):
    """Represents the metrics of one measured run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    time_s: Optional[NonNegativeFinite] = None
    power_w: Optional[PositiveFinite] = None
    power_peak_w: Optional[PositiveFinite] = None
    memory_mb: Optional[NonNegativeFinite] = None

    @model_validator(mode="after")
    def _check_peak(self) -> "MeasurementSet":
        if (
            self.power_w is not None
            and self.power_peak_w is not None
            and self.power_peak_w < self.power_w
        ):
            raise ValueError("power_peak_w must not be below power_w")
        return self

    def to_metrics(self) -> Metrics:
        return Metrics(
            time_s=self.time_s, power_w=self.power_w, memory_mb=self.memory_mb
        )


class WorkloadRunner(ABC):
    """A unit of work which can be measured.

    A runner on the virtual clock does not consume real time. Its ``run`` returns
    the simulated duration and the power probe is queried at simulated offsets.
    """

    @property
    def virtual_clock(self) -> bool:
        return False

    def configure(self, workload: WorkloadSpec) -> None:
        """Pass the workload name and parameters to the runner."""

    @abstractmethod
    async def run(self) -> Optional[float]:
        """Execute the workload.

        Returns the simulated duration in seconds if the runner uses the virtual
        clock, otherwise None.
        """

    @abstractmethod
    def power_probe(self, elapsed_s: float) -> float:
        """Return the instantaneous power in W, ``elapsed_s`` after the start."""

    @abstractmethod
    def memory_probe(self) -> float:
        """Return the peak memory use in MB."""


class Meter(ABC):
    """Base class of all meters.

    A meter is started before the workload runs and stopped afterwards. After
    stopping, :py:meth:`contribute` returns the fields it adds to the
    :py:class:`MeasurementSet`.
    """

    async def start(self, runner: WorkloadRunner) -> None:
        pass

    def sample(self, runner: WorkloadRunner, elapsed_s: float) -> None:
        pass

    async def stop(self, runner: WorkloadRunner, duration_s: float) -> None:
        pass

    async def cancel(self) -> None:
        """Drop everything collected, the run failed."""

    @abstractmethod
    def contribute(self) -> dict[str, float]:
        ...


class TimeMeter(Meter):
    def __init__(self):
        self._duration: Optional[float] = None

    async def stop(self, runner: WorkloadRunner, duration_s: float) -> None:
        self._duration = duration_s

    def contribute(self) -> dict[str, float]:
        if self._duration is None:
            return {}
        return {"time_s": self._duration}


class PowerMeter(Meter):
    """Samples the power probe periodically while the workload runs.

    The first sample is taken at the start, so every run yields at least one.
    """

    def __init__(self, interval_ms: int = 100):
        if interval_ms < 1:
            raise ValueError("interval_ms must be at least 1")
        self.interval_ms = interval_ms
        self.samples: list[float] = []
        self._task: Optional[asyncio.Task] = None
        self._started = 0.0

    async def start(self, runner: WorkloadRunner) -> None:
        self.samples = []
        if runner.virtual_clock:
            return
        self._started = time.perf_counter()
        self.sample(runner, 0.0)
        self._task = asyncio.create_task(self._sample_loop(runner))

    def sample(self, runner: WorkloadRunner, elapsed_s: float) -> None:
        self.samples.append(runner.power_probe(elapsed_s))

    async def _sample_loop(self, runner: WorkloadRunner) -> None:
        interval = self.interval_ms / 1000
        while True:
            await asyncio.sleep(interval)
            self.sample(runner, time.perf_counter() - self._started)

    async def _stop_task(self) -> None:
        if self._task is None:
            return
        self._task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await self._task
        self._task = None

    async def stop(self, runner: WorkloadRunner, duration_s: float) -> None:
        await self._stop_task()
        if runner.virtual_clock:
            count = max(1, math.ceil(duration_s * 1000 / self.interval_ms))
            for k in range(count):
                self.sample(runner, k * self.interval_ms / 1000)

    async def cancel(self) -> None:
        await self._stop_task()
        self.samples = []

    def contribute(self) -> dict[str, float]:
        if not self.samples:
            return {}
        low, high = min(self.samples), max(self.samples)
        mean = min(max(statistics.fmean(self.samples), low), high)
        return {"power_w": mean, "power_peak_w": high}


class MemoryMeter(Meter):
    def __init__(self):
        self._peak: Optional[float] = None

    async def stop(self, runner: WorkloadRunner, duration_s: float) -> None:
        self._peak = runner.memory_probe()

    def contribute(self) -> dict[str, float]:
        if self._peak is None:
            return {}
        return {"memory_mb": self._peak}


def build_meters(meters: MeterSet) -> list[Meter]:
    """Create the built-in meters selected by a meter set."""
    result: list[Meter] = []
    if meters.time_enabled:
        result.append(TimeMeter())
    if meters.power_enabled:
        result.append(PowerMeter(meters.power_sample_interval_ms))
    if meters.memory_enabled:
        result.append(MemoryMeter())
    return result


async def measure_run(
    runner: WorkloadRunner,
    meters: MeterSet,
    timeout_s: Optional[float] = None,
    extra_meters: Iterable[Meter] = (),
) -> MeasurementSet:
    """Run a workload once and measure it.

    Time is the wall clock around the run, or the duration reported by a runner
    on the virtual clock. Fields of disabled meters are absent. Custom meters in
    ``extra_meters`` may contribute any :py:class:`MeasurementSet` field.

    :raises MeasurementTimeoutException: if the run takes longer than timeout_s
    """
    active = build_meters(meters) + list(extra_meters)
    for meter in active:
        await meter.start(runner)

    try:
        started = time.perf_counter()
        try:
            virtual = await asyncio.wait_for(runner.run(), timeout_s)
        except asyncio.TimeoutError:
            raise MeasurementTimeoutException(timeout_s or 0.0) from None
        elapsed = time.perf_counter() - started

        if runner.virtual_clock:
            if virtual is None:
                raise RuntimeError("runner on the virtual clock reported no duration")
            duration = virtual
            if timeout_s is not None and duration > timeout_s:
                raise MeasurementTimeoutException(timeout_s)
        else:
            duration = elapsed

        for meter in active:
            await meter.stop(runner, duration)
    except BaseException:
        for meter in active:
            await meter.cancel()
        raise

    values: dict[str, float] = {}
    for meter in active:
        values.update(meter.contribute())
    _logger.debug("Measured %s", values)
    return MeasurementSet(**values)
