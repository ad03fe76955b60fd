"""Configuration space of the Nvidia Jetson Orin and its index encoding."""

from enum import Enum
import functools
import logging
import math
from pathlib import Path
from typing import Final, Iterable, Sequence, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    ValidationError,
    field_validator,
    model_validator,
)

from .exceptions import (
    IndexRangeException,
    MembershipException,
    SpaceDefinitionException,
)
from .model import CONFIG_FIELDS, Configuration

_logger: Final = logging.getLogger(__name__)

_MASK64: Final = (1 << 64) - 1
_TWO64: Final = 1 << 64


class SplitMix64:
    """splitmix64 pseudo random generator.

    The generator is seeded directly with the user seed (reduced to 64 bit), so
    every implementation of the algorithm yields the same stream.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next(self) -> int:
        """Return the next 64 bit output."""
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Return a uniform integer in [0, bound) using rejection sampling."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = _TWO64 - (_TWO64 % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound

    def random(self) -> float:
        """Return a uniform float in [0, 1) built from the top 53 bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))


class ParameterKind(str, Enum):
    CORE_COUNT = "core-count"
    FREQUENCY = "frequency"


class ParameterDef(BaseModel):
    """Represents one modifiable hardware parameter and its admissible values."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    kind: ParameterKind
    values: tuple[int, ...]

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: tuple[int, ...]) -> tuple[int, ...]:
        if len(values) == 0:
            raise ValueError("at least one value is required")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("values must be strictly increasing")
        if values[0] < 0:
            raise ValueError("values must not be negative")
        return values

    @model_validator(mode="after")
    def _check_frequencies(self) -> "ParameterDef":
        if self.kind == ParameterKind.FREQUENCY and self.values[0] <= 0:
            raise ValueError(f"frequencies of '{self.name}' must be positive")
        return self


class SpaceDefinition(BaseModel):
    """Schema of a space definition file."""

    params: list[ParameterDef]


class ConfigSpace:
    """An ordered list of parameters forming a discrete search space.

    Every configuration maps to a mixed-radix index: the first parameter is the
    most significant digit, the last one the least significant digit. The digit
    of a parameter is the position of its value in the grid.
    """

    def __init__(self, params: Iterable[ParameterDef]):
        self.params: tuple[ParameterDef, ...] = tuple(params)
        if len(self.params) == 0:
            raise SpaceDefinitionException("a space needs at least one parameter")

        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise SpaceDefinitionException(f"duplicate parameter names in {names}")

        self._radices = tuple(len(p.values) for p in self.params)
        self._positions = tuple(
            {value: i for i, value in enumerate(p.values)} for p in self.params
        )
        self._by_name = {p.name: p for p in self.params}

    def __eq__(self, __other: object) -> bool:
        if not isinstance(__other, ConfigSpace):
            return False
        return self.params == __other.params

    def __hash__(self) -> int:
        return hash(self.params)

    def __repr__(self):
        counts = ",".join(str(r) for r in self._radices)
        return f"ConfigSpace(counts=({counts}))"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @property
    def radices(self) -> tuple[int, ...]:
        """Number of values of each parameter."""
        return self._radices

    def cardinality(self) -> int:
        return math.prod(self._radices)

    def parameter(self, name: str) -> ParameterDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise SpaceDefinitionException(f"no parameter '{name}'") from None

    def lowest(self, name: str) -> int:
        """Return the lowest grid value of a parameter."""
        return self.parameter(name).values[0]

    def highest(self, name: str) -> int:
        """Return the highest grid value of a parameter."""
        return self.parameter(name).values[-1]

    def digits(self, config: Configuration) -> tuple[int, ...]:
        """Return the grid positions of all values of a configuration.

        :raises MembershipException: if a value is not on its grid
        """
        result = []
        for param, positions in zip(self.params, self._positions):
            try:
                value = getattr(config, param.name)
            except AttributeError:
                raise SpaceDefinitionException(
                    f"parameter '{param.name}' is not a configuration field"
                ) from None
            try:
                result.append(positions[value])
            except (KeyError, TypeError):
                raise MembershipException(param.name, value) from None
        return tuple(result)

    def from_digits(self, digits: Sequence[int]) -> Configuration:
        """Build the configuration for the given grid positions."""
        if len(digits) != len(self.params):
            raise SpaceDefinitionException(
                f"expected {len(self.params)} digits, got {len(digits)}"
            )
        values = {}
        for param, digit in zip(self.params, digits):
            if not 0 <= digit < len(param.values):
                raise MembershipException(param.name, f"position {digit}")
            values[param.name] = param.values[digit]
        try:
            return Configuration(**values)
        except ValidationError as e:
            raise SpaceDefinitionException(
                f"space does not describe a configuration: {e}"
            ) from e

    def validate(self, config: Configuration) -> Configuration:
        """Check that every value of the configuration is on its grid."""
        self.digits(config)
        return config

    def contains(self, config: Configuration) -> bool:
        try:
            self.digits(config)
        except MembershipException:
            return False
        return True

    def encode_index(self, config: Configuration) -> int:
        index = 0
        for digit, radix in zip(self.digits(config), self._radices):
            index = index * radix + digit
        return index

    def decode_index(self, index: int) -> Configuration:
        return self.from_digits(self.index_digits(index))

    def index_digits(self, index: int) -> tuple[int, ...]:
        """Split an index into its mixed-radix digits."""
        cardinality = self.cardinality()
        if not 0 <= index < cardinality:
            raise IndexRangeException(index, cardinality)
        digits = []
        for radix in reversed(self._radices):
            index, digit = divmod(index, radix)
            digits.append(digit)
        return tuple(reversed(digits))

    def minimum(self) -> Configuration:
        """The configuration with every parameter at its lowest value."""
        return self.from_digits([0] * len(self.params))

    def maximum(self) -> Configuration:
        """The configuration with every parameter at its highest value."""
        return self.from_digits([r - 1 for r in self._radices])

    def random_sample(self, seed: int, n: int) -> list[Configuration]:
        return random_sample(self, seed, n)


def linear_grid(lo: int, hi: int, count: int) -> tuple[int, ...]:
    """Return `count` values spaced linearly from lo to hi (inclusive).

    Values are rounded half up to the nearest integer using exact integer
    arithmetic.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if count == 1:
        return (lo,)
    steps = count - 1
    return tuple(
        (2 * (lo * steps + i * (hi - lo)) + steps) // (2 * steps) for i in range(count)
    )


CPU_FREQ_RANGE_KHZ: Final = (115_000, 2_200_000, 29)
GPU_FREQ_RANGE_KHZ: Final = (306_000, 1_300_000, 11)
EMC_FREQ_RANGE_KHZ: Final = (204_000, 3_200_000, 4)


@functools.cache
def build_orin_space() -> ConfigSpace:
    """Return the configuration space of the Jetson Orin.

    Cluster 1 keeps at least one core online, clusters 2 and 3 may be switched
    off completely. A switched off cluster still carries a frequency value.
    """
    cpu_grid = linear_grid(*CPU_FREQ_RANGE_KHZ)
    return ConfigSpace(
        [
            ParameterDef(
                name="cores_c1", kind=ParameterKind.CORE_COUNT, values=(1, 2, 3, 4)
            ),
            ParameterDef(
                name="cores_c2", kind=ParameterKind.CORE_COUNT, values=(0, 1, 2, 3, 4)
            ),
            ParameterDef(
                name="cores_c3", kind=ParameterKind.CORE_COUNT, values=(0, 1, 2, 3, 4)
            ),
            ParameterDef(
                name="freq_c1_khz", kind=ParameterKind.FREQUENCY, values=cpu_grid
            ),
            ParameterDef(
                name="freq_c2_khz", kind=ParameterKind.FREQUENCY, values=cpu_grid
            ),
            ParameterDef(
                name="freq_c3_khz", kind=ParameterKind.FREQUENCY, values=cpu_grid
            ),
            ParameterDef(
                name="gpu_freq_khz",
                kind=ParameterKind.FREQUENCY,
                values=linear_grid(*GPU_FREQ_RANGE_KHZ),
            ),
            ParameterDef(
                name="emc_freq_khz",
                kind=ParameterKind.FREQUENCY,
                values=linear_grid(*EMC_FREQ_RANGE_KHZ),
            ),
        ]
    )


def load_space(path: Union[str, Path]) -> ConfigSpace:
    """Load a space definition file.

    The file contains ``{"params": [{"name": ..., "kind": ..., "values": [...]}]}``
    with one entry per configuration field in the canonical order.
    """
    try:
        definition = SpaceDefinition.model_validate_json(Path(path).read_text("utf-8"))
    except ValidationError as e:
        raise SpaceDefinitionException(f"invalid space file {path}: {e}") from e

    names = tuple(p.name for p in definition.params)
    if names != CONFIG_FIELDS:
        raise SpaceDefinitionException(
            f"space file {path} must define {', '.join(CONFIG_FIELDS)} in this order"
        )
    _logger.debug("Loaded space definition from %s", path)
    return ConfigSpace(definition.params)


def cardinality(space: ConfigSpace) -> int:
    """Number of configurations of a space."""
    return space.cardinality()


def encode_index(space: ConfigSpace, config: Configuration) -> int:
    """Mixed-radix index of a configuration.

    :raises MembershipException: if a value is not on its grid
    """
    return space.encode_index(config)


def decode_index(space: ConfigSpace, index: int) -> Configuration:
    """Configuration of a mixed-radix index.

    :raises IndexRangeException: if the index is outside of [0, cardinality)
    """
    return space.decode_index(index)


def random_sample(space: ConfigSpace, seed: int, n: int) -> list[Configuration]:
    """Draw n configurations uniformly (with replacement) from the space."""
    if n < 0:
        raise ValueError(f"n must not be negative, got {n}")
    rng = SplitMix64(seed)
    total = space.cardinality()
    return [space.decode_index(rng.below(total)) for _ in range(n)]
