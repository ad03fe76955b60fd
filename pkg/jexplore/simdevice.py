"""Simulated Jetson Orin and configuration appliers.

The simulator evaluates closed-form models of latency, power and memory for a
configuration. The models reproduce the qualitative behavior of the device:
an inverse relation between power and latency and a cut-off in latency when
the memory controller runs at its lowest frequency.
"""

from abc import ABC, abstractmethod
import asyncio
import logging
from pathlib import Path
from typing import ClassVar, Final, Mapping, NamedTuple, Optional, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from .exceptions import (
    ApplyNotSupportedException,
    WorkloadException,
)
from .measurement import WorkloadRunner
from .model import Configuration, PositiveFinite, WorkloadSpec
from .space import ConfigSpace, build_orin_space

_logger: Final = logging.getLogger(__name__)

_SUM_TOLERANCE: Final = 1e-9


class WorkloadPreset(BaseModel):
    """A named simulated workload."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1)
    t_ref_s: PositiveFinite
    """Latency at the all-max configuration."""
    mem_base_mb: PositiveFinite


PRESETS: Final[Mapping[str, WorkloadPreset]] = {
    "llama": WorkloadPreset(name="llama", t_ref_s=20.0, mem_base_mb=26000.0),
    "llava": WorkloadPreset(name="llava", t_ref_s=15.0, mem_base_mb=28000.0),
}


class Rates(NamedTuple):
    """Normalized rates of a configuration, each in (0, 1]."""

    gpu: float
    cpu: float
    cpu_floored: float
    emc: float
    emc_floored: float


def _floored(value: float, floor: float) -> float:
    # equal to floor + (1 - floor) * value but exactly 1.0 for value 1.0
    return 1.0 - (1.0 - floor) * (1.0 - value)


def _cpu_capacity(space: ConfigSpace) -> int:
    total = 0
    for cluster in (1, 2, 3):
        cores = space.highest(f"cores_c{cluster}")
        total += cores * space.highest(f"freq_c{cluster}_khz")
    return total


class DeviceModel(BaseModel):
    """Constants of the device simulator.

    The latency weights (alpha, beta, gamma) and the power weights (w_g, w_e,
    w_c) must each sum to one. kappa must be large enough that every
    configuration at the lowest memory frequency is slower than every other
    configuration.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(default=0.50, ge=0, le=1)
    beta: float = Field(default=0.25, ge=0, le=1)
    gamma: float = Field(default=0.25, ge=0, le=1)
    kappa: float = Field(default=3.5, ge=1, allow_inf_nan=False)
    c_floor: float = Field(default=0.15, gt=0, lt=1)
    e_floor: float = Field(default=0.35, gt=0, lt=1)
    p_min_w: PositiveFinite = 10.0
    p_max_w: PositiveFinite = 42.0
    w_g: float = Field(default=0.55, ge=0, le=1)
    w_e: float = Field(default=0.15, ge=0, le=1)
    w_c: float = Field(default=0.30, ge=0, le=1)
    noise_std: float = Field(default=0.0, ge=0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _check_constants(self) -> "DeviceModel":
        if abs(self.alpha + self.beta + self.gamma - 1.0) > _SUM_TOLERANCE:
            raise ValueError("alpha + beta + gamma must be 1")
        if abs(self.w_g + self.w_e + self.w_c - 1.0) > _SUM_TOLERANCE:
            raise ValueError("w_g + w_e + w_c must be 1")
        if self.p_max_w <= self.p_min_w:
            raise ValueError("p_max_w must be above p_min_w")

        lower, upper = _separation_factors(self, build_orin_space())
        if upper is not None and lower <= upper:
            raise ValueError(
                f"kappa {self.kappa} does not separate the lowest EMC frequency "
                f"({lower:.4f} <= {upper:.4f})"
            )
        return self

    def rates(self, config: Configuration, space: ConfigSpace) -> Rates:
        gpu = config.gpu_freq_khz / space.highest("gpu_freq_khz")
        cpu = (
            config.cores_c1 * config.freq_c1_khz
            + config.cores_c2 * config.freq_c2_khz
            + config.cores_c3 * config.freq_c3_khz
        ) / _cpu_capacity(space)
        emc = config.emc_freq_khz / space.highest("emc_freq_khz")
        return Rates(
            gpu=gpu,
            cpu=cpu,
            cpu_floored=_floored(cpu, self.c_floor),
            emc=emc,
            emc_floored=_floored(emc, self.e_floor),
        )


def _separation_factors(
    model: DeviceModel, space: ConfigSpace
) -> tuple[float, Optional[float]]:
    """Return the latency factors bounding the two EMC groups.

    The first value is the smallest factor at the lowest EMC frequency, the
    second the largest factor at any other EMC frequency (None if there is no
    other EMC frequency).
    """
    emc_grid = space.parameter("emc_freq_khz").values
    emc_max = emc_grid[-1]
    lower = model.kappa * (
        model.alpha
        + model.beta / _floored(emc_grid[0] / emc_max, model.e_floor)
        + model.gamma
    )
    if len(emc_grid) < 2:
        return lower, None

    slowest = space.minimum()
    gpu_min = slowest.gpu_freq_khz / space.highest("gpu_freq_khz")
    cpu_min = model.rates(slowest, space).cpu_floored
    upper = (
        model.alpha / gpu_min
        + model.beta / _floored(emc_grid[1] / emc_max, model.e_floor)
        + model.gamma / cpu_min
    )
    return lower, upper


def sim_latency(
    model: DeviceModel,
    preset: WorkloadPreset,
    config: Configuration,
    space: Optional[ConfigSpace] = None,
) -> float:
    """Latency of a workload run in seconds.

    :raises MembershipException: if the configuration is not in the space
    """
    space = space or build_orin_space()
    space.validate(config)
    r = model.rates(config, space)
    factor = (
        model.alpha / r.gpu + model.beta / r.emc_floored + model.gamma / r.cpu_floored
    )
    if config.emc_freq_khz == space.lowest("emc_freq_khz"):
        factor *= model.kappa
    return preset.t_ref_s * factor


def sim_power(
    model: DeviceModel,
    config: Configuration,
    space: Optional[ConfigSpace] = None,
) -> float:
    """Mean power of a workload run in W, always within the power band.

    :raises MembershipException: if the configuration is not in the space
    """
    space = space or build_orin_space()
    space.validate(config)
    r = model.rates(config, space)
    power = model.p_min_w + (model.p_max_w - model.p_min_w) * (
        model.w_g * r.gpu + model.w_e * r.emc + model.w_c * r.cpu
    )
    return min(max(power, model.p_min_w), model.p_max_w)


def sim_memory(
    model: DeviceModel,
    preset: WorkloadPreset,
    config: Configuration,
    space: Optional[ConfigSpace] = None,
) -> float:
    """Peak memory of a workload run in MB.

    Memory does not depend on the hardware configuration.
    """
    return preset.mem_base_mb


def emc_separation_bounds(
    model: DeviceModel,
    preset: WorkloadPreset,
    space: Optional[ConfigSpace] = None,
) -> tuple[float, float]:
    """Return the latency bounds separating the lowest EMC frequency.

    The first value is the largest latency of any configuration above the
    lowest EMC frequency, the second the smallest latency of any configuration
    at the lowest EMC frequency.
    """
    space = space or build_orin_space()
    lower, upper = _separation_factors(model, space)
    if upper is None:
        raise ValueError("the space has a single EMC frequency")
    return preset.t_ref_s * upper, preset.t_ref_s * lower


class ApplyAck(BaseModel):
    """Confirms that a configuration was applied."""

    model_config = ConfigDict(frozen=True)

    backend: str
    config: Configuration


class ConfigApplier(ABC):
    """Sets the hardware parameters of a device."""

    backend: ClassVar[str]

    def __init__(self, space: Optional[ConfigSpace] = None):
        self.space = space or build_orin_space()

    @abstractmethod
    def apply(self, config: Configuration) -> ApplyAck:
        ...


class SimApplier(ConfigApplier):
    """Applier of the simulator, it remembers the current configuration."""

    backend = "sim"

    def __init__(self, space: Optional[ConfigSpace] = None):
        super().__init__(space)
        self.current: Optional[Configuration] = None

    def apply(self, config: Configuration) -> ApplyAck:
        self.current = self.space.validate(config)
        _logger.debug("Applied %r", config)
        return ApplyAck(backend=self.backend, config=config)


_CPU_ROOT: Final = "/sys/devices/system/cpu"
_GPU_DEVFREQ: Final = "/sys/devices/platform/17000000.ga10b/devfreq/17000000.ga10b"
_EMC_CLK: Final = "/sys/kernel/debug/bpmp/debug/clk/emc"
_CORES_PER_CLUSTER: Final = 4


class JetsonOrinApplier(ConfigApplier):
    """Applier for a real Jetson Orin.

    Writing to sysfs is not supported. The applier validates the configuration
    and logs the writes it would perform.
    """

    backend = "jetson-orin"

    def planned_writes(self, config: Configuration) -> list[str]:
        """Return the sysfs writes for a configuration as ``path=value``."""
        self.space.validate(config)
        writes = []
        for cluster in range(3):
            online = getattr(config, f"cores_c{cluster + 1}")
            for core in range(_CORES_PER_CLUSTER):
                cpu = cluster * _CORES_PER_CLUSTER + core
                if cpu == 0:
                    continue  # cpu0 cannot be taken offline
                state = 1 if core < online else 0
                writes.append(f"{_CPU_ROOT}/cpu{cpu}/online={state}")

            policy = f"{_CPU_ROOT}/cpufreq/policy{cluster * _CORES_PER_CLUSTER}"
            freq = getattr(config, f"freq_c{cluster + 1}_khz")
            writes.append(f"{policy}/scaling_min_freq={freq}")
            writes.append(f"{policy}/scaling_max_freq={freq}")

        gpu_hz = config.gpu_freq_khz * 1000
        writes.append(f"{_GPU_DEVFREQ}/min_freq={gpu_hz}")
        writes.append(f"{_GPU_DEVFREQ}/max_freq={gpu_hz}")
        writes.append(f"{_EMC_CLK}/mrq_rate_locked=1")
        writes.append(f"{_EMC_CLK}/rate={config.emc_freq_khz * 1000}")
        return writes

    def apply(self, config: Configuration) -> ApplyAck:
        writes = self.planned_writes(config)
        for write in writes:
            _logger.info("Would write %s", write)
        raise ApplyNotSupportedException(self.backend, writes)


def apply_config(applier: ConfigApplier, config: Configuration) -> ApplyAck:
    """Apply a configuration using the given backend.

    :raises MembershipException: if the configuration is not in the space
    :raises ApplyNotSupportedException: if the backend cannot apply it
    """
    return applier.apply(config)


_PRESET_OVERRIDES: Final = ("t_ref_s", "mem_base_mb")


def resolve_preset(
    workload: WorkloadSpec, presets: Mapping[str, WorkloadPreset]
) -> WorkloadPreset:
    """Select the preset named by a workload and apply its parameters.

    Parameters ``t_ref_s`` and ``mem_base_mb`` override the preset fields,
    other parameters are ignored by the simulator.
    """
    try:
        preset = presets[workload.name]
    except KeyError:
        raise WorkloadException(
            f"unknown workload '{workload.name}', "
            f"known: {', '.join(sorted(presets))}"
        ) from None

    overrides = {k: v for k, v in workload.params.items() if k in _PRESET_OVERRIDES}
    if not overrides:
        return preset
    try:
        return WorkloadPreset.model_validate({**preset.model_dump(), **overrides})
    except ValidationError as e:
        raise WorkloadException(
            f"invalid parameters for workload '{workload.name}': {e}"
        ) from e


class SimWorkload(WorkloadRunner):
    """Runs a simulated workload on the configuration of a :py:class:`SimApplier`.

    Without ``realtime`` the run uses the virtual clock and returns instantly.
    With ``realtime`` the run sleeps for the simulated latency.
    """

    def __init__(
        self,
        applier: SimApplier,
        model: Optional[DeviceModel] = None,
        presets: Optional[Mapping[str, WorkloadPreset]] = None,
        preset: str = "llama",
        realtime: bool = False,
        noise_seed: int = 0,
    ):
        self.applier = applier
        self.model = model or DeviceModel()
        self.presets = dict(presets or PRESETS)
        if preset not in self.presets:
            raise WorkloadException(f"unknown preset '{preset}'")
        self.preset = self.presets[preset]
        self.realtime = realtime
        self._rng = np.random.default_rng(noise_seed)
        self._power: Optional[tuple[Configuration, float]] = None

    @property
    def virtual_clock(self) -> bool:
        return not self.realtime

    def configure(self, workload: WorkloadSpec) -> None:
        self.preset = resolve_preset(workload, self.presets)

    def _config(self) -> Configuration:
        if self.applier.current is None:
            raise WorkloadException("no configuration applied")
        return self.applier.current

    def _noise(self) -> float:
        if self.model.noise_std == 0:
            return 1.0
        return max(0.0, 1.0 + float(self._rng.normal(0.0, self.model.noise_std)))

    async def run(self) -> Optional[float]:
        config = self._config()
        latency = sim_latency(self.model, self.preset, config, self.applier.space)
        latency *= self._noise()
        _logger.debug(
            "Simulated %s run on %r: %.3f s", self.preset.name, config, latency
        )
        if self.realtime:
            await asyncio.sleep(latency)
            return None
        return latency

    def power_probe(self, elapsed_s: float) -> float:
        config = self._config()
        if self._power is None or self._power[0] is not config:
            self._power = (config, sim_power(self.model, config, self.applier.space))
        power = self._power[1]
        if self.model.noise_std == 0:
            return power
        power *= self._noise()
        return min(max(power, self.model.p_min_w), self.model.p_max_w)

    def memory_probe(self) -> float:
        return sim_memory(self.model, self.preset, self._config(), self.applier.space)


class UnsupportedWorkload(WorkloadRunner):
    """Runner of backends without a bundled workload."""

    def __init__(self, backend: str):
        self.backend = backend

    async def run(self) -> Optional[float]:
        raise WorkloadException(f"{self.backend} has no bundled workload")

    def power_probe(self, elapsed_s: float) -> float:
        raise WorkloadException(f"{self.backend} has no power probe")

    def memory_probe(self) -> float:
        raise WorkloadException(f"{self.backend} has no memory probe")


class SimDevice:
    """A simulated device, pairing an applier with a workload runner."""

    def __init__(
        self,
        model: Optional[DeviceModel] = None,
        presets: Optional[Mapping[str, WorkloadPreset]] = None,
        preset: str = "llama",
        realtime: bool = False,
        noise_seed: int = 0,
        space: Optional[ConfigSpace] = None,
    ):
        self.applier = SimApplier(space)
        self.runner = SimWorkload(
            self.applier,
            model=model,
            presets=presets,
            preset=preset,
            realtime=realtime,
            noise_seed=noise_seed,
        )


class PresetDefinition(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_ref_s: PositiveFinite
    mem_base_mb: PositiveFinite


class ModelFile(BaseModel):
    """Schema of a simulator model file."""

    model_config = ConfigDict(extra="forbid")

    model: DeviceModel = Field(default_factory=DeviceModel)
    presets: dict[str, PresetDefinition] = Field(default_factory=dict)


def load_model_file(
    path: Union[str, Path],
) -> tuple[DeviceModel, dict[str, WorkloadPreset]]:
    """Load model constants and presets from a JSON file.

    Missing constants keep their defaults, presets of the file are added to
    (or replace) the built-in presets.

    :raises ValueError: if the file does not match the schema
    """
    data = ModelFile.model_validate_json(Path(path).read_text("utf-8"))
    presets = dict(PRESETS)
    for name, definition in data.presets.items():
        presets[name] = WorkloadPreset(name=name, **definition.model_dump())
    _logger.debug("Loaded model file %s with presets %s", path, sorted(presets))
    return data.model, presets
