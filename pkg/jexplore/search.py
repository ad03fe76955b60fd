"""Search algorithms proposing configurations to explore."""

from abc import ABC, abstractmethod
from collections import Counter, deque
import logging
import math
from typing import Any, Callable, Final, NamedTuple, Optional, Sequence, TypeVar

import numpy as np
import numpy.typing as npt

from .exceptions import MembershipException
from .model import Configuration, SampleRecord
from .space import ConfigSpace, SplitMix64

_logger: Final = logging.getLogger(__name__)


class SearchAlgorithm(ABC):
    """Contract between the host and a search algorithm.

    The host calls :py:meth:`propose` to obtain configurations and
    :py:meth:`notify` with every recorded sample, possibly in another order than
    the proposals. Both are never called concurrently.
    """

    name: str = ""

    @abstractmethod
    def propose(self, n: int) -> list[Configuration]:
        """Return up to n configurations to evaluate next.

        An empty list with no evaluations pending means the search is done.
        """

    @abstractmethod
    def notify(self, records: Sequence[SampleRecord]) -> None:
        """Report completed samples."""


_A = TypeVar("_A", bound=type[SearchAlgorithm])

_ALGORITHMS: dict[str, Callable[..., SearchAlgorithm]] = {}


def register_algorithm(name: str) -> Callable[[_A], _A]:
    """Class decorator registering a search algorithm by name.

    The class is instantiated as ``cls(space, seed, **options)``.
    """

    def decorator(cls: _A) -> _A:
        if name in _ALGORITHMS:
            raise ValueError(f"algorithm '{name}' is already registered")
        cls.name = name
        _ALGORITHMS[name] = cls
        return cls

    return decorator


def available_algorithms() -> list[str]:
    return sorted(_ALGORITHMS)


def create_algorithm(
    name: str, space: ConfigSpace, seed: int, **options: Any
) -> SearchAlgorithm:
    try:
        factory = _ALGORITHMS[name]
    except KeyError:
        raise ValueError(
            f"unknown algorithm '{name}', available: "
            + ", ".join(available_algorithms())
        ) from None
    return factory(space, seed, **options)


@register_algorithm("random")
class RandomSearch(SearchAlgorithm):
    """Uniform sampling with replacement.

    Consecutive calls continue one random stream, so ``propose(a)`` followed by
    ``propose(b)`` equals ``random_sample(space, seed, a + b)``.
    """

    def __init__(self, space: ConfigSpace, seed: int):
        self.space = space
        self._rng = SplitMix64(seed)
        self._cardinality = space.cardinality()

    def propose(self, n: int) -> list[Configuration]:
        if n < 0:
            raise ValueError(f"n must not be negative, got {n}")
        return [
            self.space.decode_index(self._rng.below(self._cardinality))
            for _ in range(n)
        ]

    def notify(self, records: Sequence[SampleRecord]) -> None:
        pass


def _as_points(points: npt.ArrayLike) -> np.ndarray:
    array = np.asarray(points, dtype=float)
    if array.size == 0:
        return array.reshape(0, 0)
    if array.ndim != 2:
        raise ValueError("points must be a sequence of objective vectors")
    return array


def dominance_matrix(points: npt.ArrayLike) -> np.ndarray:
    """Return D with ``D[i, j]`` true iff point i dominates point j.

    All objectives are minimized.
    """
    p = _as_points(points)
    if len(p) == 0:
        return np.zeros((0, 0), dtype=bool)
    le = np.all(p[:, None, :] <= p[None, :, :], axis=2)
    lt = np.any(p[:, None, :] < p[None, :, :], axis=2)
    return le & lt


def nondominated_sort(points: npt.ArrayLike) -> list[list[int]]:
    """Sort points into fronts of increasing rank.

    Front 0 holds the non-dominated points, front k the points which are
    non-dominated once the fronts before k are removed. Indices within a front
    are ascending.
    """
    dominates = dominance_matrix(points)
    n = len(dominates)
    dominated_by = dominates.sum(axis=0)
    fronts: list[list[int]] = []
    current = np.flatnonzero(dominated_by == 0)
    assigned = 0
    while current.size:
        fronts.append(current.tolist())
        assigned += current.size
        dominated_by = dominated_by - dominates[current].sum(axis=0)
        dominated_by[current] = -1
        current = np.flatnonzero(dominated_by == 0)
    assert assigned == n
    return fronts


def crowding_distance(points: npt.ArrayLike) -> np.ndarray:
    """Crowding distance of every point of one front.

    The points with the smallest and the largest value of an objective get an
    infinite distance.
    """
    p = _as_points(points)
    n = len(p)
    if n <= 2:
        return np.full(n, np.inf)
    distance = np.zeros(n)
    for k in range(p.shape[1]):
        order = np.argsort(p[:, k], kind="stable")
        values = p[order, k]
        distance[order[0]] = distance[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span == 0:
            continue
        distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distance


def hypervolume(points: npt.ArrayLike, reference: Sequence[float]) -> float:
    """Area dominated by 2-D points and bounded by the reference point.

    Points not strictly better than the reference in both objectives do not
    contribute.
    """
    ref_x, ref_y = reference
    p = _as_points(points)
    if len(p) == 0:
        return 0.0
    if p.shape[1] != 2:
        raise ValueError("hypervolume supports two objectives")
    p = p[(p[:, 0] < ref_x) & (p[:, 1] < ref_y)]

    volume = 0.0
    best_y = ref_y
    for x, y in p[np.lexsort((p[:, 1], p[:, 0]))]:
        if y < best_y:
            volume += (ref_x - x) * (best_y - y)
            best_y = y
    return float(volume)


OBJECTIVE_COLUMNS: Final = {"power": "power_w", "time": "time_s", "memory": "memory_mb"}


class _Individual(NamedTuple):
    genome: tuple[int, ...]
    objectives: tuple[float, ...]


@register_algorithm("evolutionary")
class EvolutionarySearch(SearchAlgorithm):
    """Multi-objective evolutionary search on the mixed-radix digits.

    Generation 0 is drawn uniformly, exactly like :py:class:`RandomSearch` with
    the same seed. Each following generation is bred from the population by
    binary tournaments on (rank, crowding distance), uniform crossover and
    per-gene reset mutation. Once all offspring of a generation are evaluated,
    the best ``population_size`` individuals of parents and offspring survive.
    """

    def __init__(
        self,
        space: ConfigSpace,
        seed: int,
        population_size: int = 20,
        objectives: Sequence[str] = ("power", "time"),
        crossover_rate: float = 0.5,
        mutation_rate: Optional[float] = None,
    ):
        if population_size < 4 or population_size % 2:
            raise ValueError("population_size must be even and at least 4")
        unknown = set(objectives).difference(OBJECTIVE_COLUMNS)
        if unknown or len(objectives) < 2:
            raise ValueError(
                f"objectives must be at least two of {', '.join(OBJECTIVE_COLUMNS)}"
            )

        self.space = space
        self.population_size = population_size
        self.objectives = tuple(OBJECTIVE_COLUMNS[o] for o in objectives)
        self.crossover_rate = crossover_rate
        self.mutation_rate = (
            mutation_rate if mutation_rate is not None else 1 / len(space.radices)
        )
        self.generation = 0
        self.unknown_notifications = 0
        self.failed_notifications = 0

        self._rng = SplitMix64(seed)
        self._population: list[_Individual] = []
        self._rank = np.zeros(0, dtype=int)
        self._crowding = np.zeros(0)
        self._offspring: list[_Individual] = []
        self._queue: deque[tuple[int, ...]] = deque(
            self._random_genome() for _ in range(population_size)
        )
        self._unresolved = len(self._queue)
        self._outstanding: Counter[tuple[int, ...]] = Counter()

    @property
    def population(self) -> list[tuple[Configuration, tuple[float, ...]]]:
        """The surviving configurations with their objective values."""
        return [
            (self.space.from_digits(ind.genome), ind.objectives)
            for ind in self._population
        ]

    def _random_genome(self) -> tuple[int, ...]:
        return self.space.index_digits(self._rng.below(self.space.cardinality()))

    def propose(self, n: int) -> list[Configuration]:
        if n < 0:
            raise ValueError(f"n must not be negative, got {n}")
        proposals = []
        while len(proposals) < n:
            if not self._queue:
                if self._unresolved > 0:
                    break  # wait for the evaluations of this generation
                self._next_generation()
            genome = self._queue.popleft()
            self._outstanding[genome] += 1
            proposals.append(self.space.from_digits(genome))
        return proposals

    def notify(self, records: Sequence[SampleRecord]) -> None:
        for record in records:
            try:
                genome = self.space.digits(record.config)
            except MembershipException:
                genome = None
            if genome is None or self._outstanding[genome] <= 0:
                self.unknown_notifications += 1
                _logger.warning("Ignoring unknown sample %s", record.sample_id)
                continue

            self._outstanding[genome] -= 1
            if self._outstanding[genome] == 0:
                del self._outstanding[genome]
            self._unresolved -= 1

            values = self._objective_values(record)
            if values is None:
                self.failed_notifications += 1
                continue
            self._offspring.append(_Individual(genome, values))

    def _objective_values(self, record: SampleRecord) -> Optional[tuple[float, ...]]:
        if record.status != "ok":
            return None
        values = tuple(record.metric(name) for name in self.objectives)
        if any(v is None or not math.isfinite(v) or v <= 0 for v in values):
            return None
        return tuple(float(v) for v in values)  # type: ignore[arg-type]

    def _next_generation(self) -> None:
        self._population = self._select(self._population + self._offspring)
        self._offspring = []
        self.generation += 1

        if len(self._population) < 2:
            _logger.warning(
                "Generation %d has no parents, drawing at random", self.generation
            )
            genomes = [self._random_genome() for _ in range(self.population_size)]
        else:
            genomes = self._breed()
        self._queue.extend(genomes)
        self._unresolved = len(genomes)
        _logger.debug(
            "Generation %d bred from %d parents", self.generation, len(self._population)
        )

    def _select(self, candidates: list[_Individual]) -> list[_Individual]:
        """(mu + lambda) selection by rank, then by crowding distance."""
        if not candidates:
            self._rank = np.zeros(0, dtype=int)
            self._crowding = np.zeros(0)
            return []

        points = np.array([c.objectives for c in candidates])
        survivors: list[int] = []
        for front in nondominated_sort(points):
            if len(survivors) + len(front) <= self.population_size:
                survivors.extend(front)
                continue
            crowding = crowding_distance(points[front])
            order = np.argsort(-crowding, kind="stable")
            free = self.population_size - len(survivors)
            survivors.extend(front[i] for i in order[:free])
            break

        selected = [candidates[i] for i in survivors]
        selected_points = points[survivors]
        self._rank = np.zeros(len(selected), dtype=int)
        self._crowding = np.zeros(len(selected))
        for rank, front in enumerate(nondominated_sort(selected_points)):
            self._rank[front] = rank
            self._crowding[front] = crowding_distance(selected_points[front])
        return selected

    def _tournament(self) -> tuple[int, ...]:
        size = len(self._population)
        i, j = self._rng.below(size), self._rng.below(size)
        if self._rank[i] < self._rank[j] or (
            self._rank[i] == self._rank[j] and self._crowding[i] >= self._crowding[j]
        ):
            return self._population[i].genome
        return self._population[j].genome

    def _mutate(self, genome: list[int]) -> tuple[int, ...]:
        for k, radix in enumerate(self.space.radices):
            if self._rng.random() < self.mutation_rate:
                genome[k] = self._rng.below(radix)
        return tuple(genome)

    def _breed(self) -> list[tuple[int, ...]]:
        offspring = []
        for _ in range(self.population_size // 2):
            first, second = list(self._tournament()), list(self._tournament())
            for k in range(len(first)):
                if self._rng.random() < self.crossover_rate:
                    first[k], second[k] = second[k], first[k]
            offspring.append(self._mutate(first))
            offspring.append(self._mutate(second))
        return offspring
