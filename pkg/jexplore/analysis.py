"""Analysis of exploration results."""

import logging
import math
from pathlib import Path
from typing import Final, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from .exceptions import (
    AnalysisArgumentException,
    InsufficientDataException,
    MetricMissingException,
)
from .model import SampleRecord
from .records import read_csv
from .search import hypervolume
from .space import ConfigSpace, build_orin_space

_logger: Final = logging.getLogger(__name__)

DEFAULT_GAP_THRESHOLD: Final = 3.0
HYPERVOLUME_REFERENCE: Final = (45.0, 400.0)
"""Reference point (power in W, time in s) of the hypervolume."""

_MIN_CUTOFF_RECORDS: Final = 4


class EmcCutoffReport(BaseModel):
    """Result of the search for a separated cluster of slow samples."""

    model_config = ConfigDict(frozen=True)

    separated: bool
    gap_s: float = Field(ge=0)
    cluster_ids: list[str]
    all_cluster_lowest_emc: bool
    all_lowest_emc_in_cluster: bool


class AnalysisReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_samples: int
    power_range: tuple[float, float]
    time_range: tuple[float, float]
    spearman_rho: float
    pareto_ids: list[str]
    emc_cutoff: EmcCutoffReport
    hypervolume: float

    def to_json(self) -> str:
        """Serialize with a fixed key order."""
        return self.model_dump_json(indent=2)


def _objectives(records: Sequence[SampleRecord]) -> np.ndarray:
    points = np.empty((len(records), 2))
    for i, record in enumerate(records):
        for k, metric in enumerate(("power_w", "time_s")):
            value = record.metric(metric)
            if value is None:
                raise MetricMissingException(record.sample_id, metric)
            points[i, k] = value
    return points


def _times(records: Sequence[SampleRecord]) -> np.ndarray:
    times = np.empty(len(records))
    for i, record in enumerate(records):
        if record.time_s is None:
            raise MetricMissingException(record.sample_id, "time_s")
        times[i] = record.time_s
    return times


def pareto_mask(points: npt.ArrayLike) -> np.ndarray:
    """Flag the 2-D points not dominated by any other point.

    Both coordinates are minimized. Equal points do not dominate each other, so
    duplicates of a frontier point are all flagged.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(p)
    mask = np.zeros(n, dtype=bool)
    order = np.lexsort((p[:, 1], p[:, 0]))
    best_y = math.inf
    i = 0
    while i < n:
        # points sharing x are sorted by y, the first one holds the group minimum
        x = p[order[i], 0]
        j = i
        while j < n and p[order[j], 0] == x:
            j += 1
        group = order[i:j]
        group_min = p[group[0], 1]
        if group_min < best_y:
            mask[group[p[group, 1] == group_min]] = True
            best_y = group_min
        i = j
    return mask


def pareto_front(records: Sequence[SampleRecord]) -> list[str]:
    """Sample ids of the records on the (power, time) Pareto front.

    The ids keep the order of the records.

    :raises MetricMissingException: if a record lacks power or time
    """
    if not records:
        return []
    mask = pareto_mask(_objectives(records))
    return [r.sample_id for r, on_front in zip(records, mask) if on_front]


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    A constant input has no defined correlation and yields 0.0.

    :raises AnalysisArgumentException: if the lengths differ or are below 2
    """
    if len(x) != len(y):
        raise AnalysisArgumentException(
            f"inputs differ in length ({len(x)} != {len(y)})"
        )
    if len(x) < 2:
        raise AnalysisArgumentException("need at least two values")

    xs, ys = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = float(stats.spearmanr(xs, ys).statistic)
    return min(max(rho, -1.0), 1.0)


def emc_cutoff_report(
    records: Sequence[SampleRecord],
    space: Optional[ConfigSpace] = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
) -> EmcCutoffReport:
    """Look for a cluster of slow samples separated by a gap in time.

    The records are sorted by time. The cluster exists if the largest gap
    between consecutive times exceeds ``gap_threshold`` times the median gap.
    It holds the records after that gap.

    :raises InsufficientDataException: if there are fewer than 4 records
    :raises MetricMissingException: if a record lacks time
    """
    if gap_threshold <= 0:
        raise AnalysisArgumentException("gap_threshold must be positive")
    if len(records) < _MIN_CUTOFF_RECORDS:
        raise InsufficientDataException(_MIN_CUTOFF_RECORDS, len(records))

    space = space or build_orin_space()
    times = _times(records)
    order = np.argsort(times, kind="stable")
    gaps = np.diff(times[order])
    split = int(np.argmax(gaps))
    gap = float(gaps[split])
    median = float(np.median(gaps))
    separated = gap > gap_threshold * median

    lowest = space.lowest("emc_freq_khz")
    if not separated:
        return EmcCutoffReport(
            separated=False,
            gap_s=gap,
            cluster_ids=[],
            all_cluster_lowest_emc=False,
            all_lowest_emc_in_cluster=False,
        )

    cluster = [records[i] for i in order[split + 1 :]]
    cluster_ids = [r.sample_id for r in cluster]
    members = set(cluster_ids)
    _logger.debug(
        "Found cluster of %d samples after a gap of %.3f s", len(cluster), gap
    )
    return EmcCutoffReport(
        separated=True,
        gap_s=gap,
        cluster_ids=cluster_ids,
        all_cluster_lowest_emc=all(r.config.emc_freq_khz == lowest for r in cluster),
        all_lowest_emc_in_cluster=all(
            r.sample_id in members
            for r in records
            if r.config.emc_freq_khz == lowest
        ),
    )


def _usable(records: Sequence[SampleRecord]) -> list[SampleRecord]:
    return [
        r
        for r in records
        if r.status == "ok" and r.power_w is not None and r.time_s is not None
    ]


def analyze_records(
    records: Sequence[SampleRecord],
    space: Optional[ConfigSpace] = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    reference: tuple[float, float] = HYPERVOLUME_REFERENCE,
) -> AnalysisReport:
    """Analyze the successful records having power and time.

    :raises InsufficientDataException: if fewer than 4 such records exist
    """
    usable = _usable(records)
    if len(usable) < _MIN_CUTOFF_RECORDS:
        raise InsufficientDataException(_MIN_CUTOFF_RECORDS, len(usable))
    if len(usable) < len(records):
        _logger.info("Ignoring %d records without metrics", len(records) - len(usable))

    points = _objectives(usable)
    power, time = points[:, 0], points[:, 1]
    return AnalysisReport(
        n_samples=len(usable),
        power_range=(float(power.min()), float(power.max())),
        time_range=(float(time.min()), float(time.max())),
        spearman_rho=spearman(power, time),
        pareto_ids=pareto_front(usable),
        emc_cutoff=emc_cutoff_report(usable, space, gap_threshold),
        hypervolume=hypervolume(points, reference),
    )


def write_scatter_svg(
    records: Sequence[SampleRecord],
    pareto_ids: Sequence[str],
    path: Union[str, Path],
) -> None:
    """Plot time against power as SVG, highlighting the Pareto front."""
    # matplotlib is optional
    import matplotlib
    from matplotlib.figure import Figure

    points = _objectives(records)
    selected = set(pareto_ids)
    on_front = np.array([r.sample_id in selected for r in records], dtype=bool)
    front = points[on_front]
    front = front[np.argsort(front[:, 1])]

    with matplotlib.rc_context({"svg.hashsalt": "jexplore"}):
        figure = Figure(figsize=(7, 4.5))
        axes = figure.subplots()
        axes.scatter(
            points[:, 1], points[:, 0], s=14, color="tab:blue", label="samples"
        )
        axes.plot(
            front[:, 1],
            front[:, 0],
            marker="o",
            markersize=5,
            color="tab:red",
            label="Pareto front",
        )
        axes.set_xlabel("time (s)")
        axes.set_ylabel("power (W)")
        axes.grid(True, alpha=0.3)
        axes.legend()
        figure.tight_layout()
        figure.savefig(path, format="svg", metadata={"Date": None})
    _logger.debug("Wrote scatter plot to %s", path)


def analyze(
    csv_path: Union[str, Path],
    space: Optional[ConfigSpace] = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    svg_path: Union[str, Path, None] = None,
) -> AnalysisReport:
    """Analyze a result file and optionally plot it.

    :raises InsufficientDataException: if the file has fewer than 4 usable records
    """
    records = read_csv(csv_path)
    report = analyze_records(records, space, gap_threshold)
    if svg_path is not None:
        write_scatter_svg(_usable(records), report.pareto_ids, svg_path)
    return report
