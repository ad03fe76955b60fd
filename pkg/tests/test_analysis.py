import asyncio
import json
import math

import numpy as np
import pytest

import jexplore
from jexplore.analysis import analyze_records, pareto_mask
from jexplore.client import create_executor


def random_points(rng: np.random.Generator, trial: int) -> np.ndarray:
    """1000 points, integer grids on even trials so that ties occur."""
    if trial % 2 == 0:
        return rng.integers(1, 50, (1000, 2)).astype(float)
    return rng.random((1000, 2)) + 1.0


def record(
    index: int,
    power_w: float,
    time_s: float,
    emc_freq_khz: int = 3200000,
    status: str = "ok",
) -> jexplore.SampleRecord:
    config = jexplore.build_orin_space().maximum()
    return jexplore.SampleRecord(
        sample_id=f"{index:06d}",
        client_id="sim-0",
        config=config.model_copy(update={"emc_freq_khz": emc_freq_khz}),
        power_w=power_w,
        time_s=time_s,
        status=status,
        timestamp=str(index),
    )


@pytest.fixture(scope="module")
def seed_42_csv(tmp_path_factory):
    """Result file of 200 random samples of the simulated device."""
    path = tmp_path_factory.mktemp("analysis") / "seed42.csv"
    settings = jexplore.ClientSettings(client_id="sim-0", deterministic=True)
    plan = jexplore.SearchPlan(seed=42, budget=200, output=path, deterministic=True)

    async def run():
        await jexplore.explore_in_process(plan, create_executor(settings))

    asyncio.run(run())
    return path


class TestParetoFront:
    def test_example(self):
        records = [
            record(0, 10.0, 500.0),
            record(1, 42.0, 20.0),
            record(2, 20.0, 100.0),
            record(3, 30.0, 90.0),
            record(4, 35.0, 95.0),
        ]

        assert jexplore.pareto_front(records) == [
            "000000",
            "000001",
            "000002",
            "000003",
        ]

    def test_duplicates_are_kept(self):
        assert pareto_mask([(1, 2), (1, 2), (2, 1), (2, 2)]).tolist() == [
            True,
            True,
            True,
            False,
        ]

    def test_equal_power(self):
        assert pareto_mask([(1, 3), (1, 2)]).tolist() == [False, True]

    def test_empty(self):
        assert jexplore.pareto_front([]) == []

    def test_missing_metric(self):
        incomplete = record(0, 10.0, 5.0).model_copy(update={"time_s": None})

        with pytest.raises(jexplore.MetricMissingException):
            jexplore.pareto_front([incomplete])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        config = jexplore.build_orin_space().maximum()

        for trial in range(100):
            p = random_points(rng, trial)
            le = (p[None, :, :] <= p[:, None, :]).all(-1)
            lt = (p[None, :, :] < p[:, None, :]).any(-1)
            expected = ~(le & lt).any(1)
            records = [
                jexplore.SampleRecord(
                    sample_id=f"{i:06d}",
                    client_id="sim-0",
                    config=config,
                    power_w=power_w,
                    time_s=time_s,
                    status="ok",
                    timestamp=str(i),
                )
                for i, (power_w, time_s) in enumerate(p.tolist())
            ]

            assert pareto_mask(p).tolist() == expected.tolist()
            assert jexplore.pareto_front(records) == [
                f"{i:06d}" for i in np.flatnonzero(expected)
            ]


class TestSpearman:
    def test_perfect(self):
        assert jexplore.spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
        assert jexplore.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_partial(self):
        assert jexplore.spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]) == pytest.approx(
            0.8
        )

    def test_ties_use_average_ranks(self):
        assert jexplore.spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(
            4.5 / math.sqrt(22.5)
        )

    def test_constant_input(self):
        assert jexplore.spearman([1, 1, 1], [1, 2, 3]) == 0.0

    def test_monotone_transform(self):
        x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0]
        y = [2.0, 7.0, 1.0, 8.0, 2.5, 0.5, 3.0, 4.0]

        assert jexplore.spearman(x, y) == pytest.approx(
            jexplore.spearman([math.exp(v) for v in x], [v**3 for v in y])
        )

    def test_length_mismatch(self):
        with pytest.raises(jexplore.AnalysisArgumentException):
            jexplore.spearman([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(jexplore.AnalysisArgumentException):
            jexplore.spearman([1], [1])


class TestEmcCutoff:
    def test_separated_cluster(self):
        records = [
            record(0, 20.0, 1.0),
            record(1, 20.0, 2.0),
            record(2, 20.0, 3.0),
            record(3, 12.0, 100.0, emc_freq_khz=204000),
        ]

        report = jexplore.emc_cutoff_report(records)

        assert report == jexplore.EmcCutoffReport(
            separated=True,
            gap_s=97.0,
            cluster_ids=["000003"],
            all_cluster_lowest_emc=True,
            all_lowest_emc_in_cluster=True,
        )

    def test_lowest_emc_outside_of_cluster(self):
        records = [
            record(0, 20.0, 1.0, emc_freq_khz=204000),
            record(1, 20.0, 2.0),
            record(2, 20.0, 3.0),
            record(3, 12.0, 100.0),
        ]

        report = jexplore.emc_cutoff_report(records)

        assert report.separated
        assert not report.all_cluster_lowest_emc
        assert not report.all_lowest_emc_in_cluster

    def test_even_spacing(self):
        records = [record(i, 20.0, float(i)) for i in range(1, 5)]

        report = jexplore.emc_cutoff_report(records)

        assert not report.separated
        assert report.cluster_ids == []
        assert report.gap_s == 1.0

    def test_threshold(self):
        records = [record(i, 20.0, t) for i, t in enumerate([1.0, 2.0, 3.0, 5.5])]

        assert jexplore.emc_cutoff_report(records).separated is False
        assert jexplore.emc_cutoff_report(records, gap_threshold=2.0).separated

    def test_too_few_records(self):
        with pytest.raises(jexplore.InsufficientDataException):
            jexplore.emc_cutoff_report([record(i, 20.0, i) for i in range(3)])

    def test_invalid_threshold(self):
        records = [record(i, 20.0, float(i)) for i in range(4)]

        with pytest.raises(jexplore.AnalysisArgumentException):
            jexplore.emc_cutoff_report(records, gap_threshold=0)


class TestAnalyze:
    def test_seed_42(self, seed_42_csv):
        report = jexplore.analyze(seed_42_csv)

        assert report.n_samples == 200
        assert report.spearman_rho == pytest.approx(-0.7639540988524713, rel=1e-9)
        assert report.spearman_rho <= -0.4
        assert report.time_range == pytest.approx((23.249358, 251.659925))
        assert report.power_range == pytest.approx((16.147146, 36.969276))
        assert report.emc_cutoff.separated
        assert len(report.emc_cutoff.cluster_ids) == 38
        assert report.emc_cutoff.all_cluster_lowest_emc
        assert report.emc_cutoff.all_lowest_emc_in_cluster
        assert report.hypervolume == pytest.approx(10215.29340214888, rel=1e-9)

    def test_pareto_ids_are_not_dominated(self, seed_42_csv):
        records = jexplore.read_csv(seed_42_csv)
        front = set(jexplore.analyze(seed_42_csv).pareto_ids)

        for r in records:
            dominated = any(
                o.power_w <= r.power_w
                and o.time_s <= r.time_s
                and (o.power_w < r.power_w or o.time_s < r.time_s)
                for o in records
            )
            assert (r.sample_id in front) != dominated

    def test_json_key_order(self, seed_42_csv):
        text = jexplore.analyze(seed_42_csv).to_json()

        assert list(json.loads(text)) == [
            "n_samples",
            "power_range",
            "time_range",
            "spearman_rho",
            "pareto_ids",
            "emc_cutoff",
            "hypervolume",
        ]
        assert list(json.loads(text)["emc_cutoff"]) == [
            "separated",
            "gap_s",
            "cluster_ids",
            "all_cluster_lowest_emc",
            "all_lowest_emc_in_cluster",
        ]

    def test_header_only(self, csv_path):
        jexplore.write_csv([], csv_path)

        with pytest.raises(jexplore.InsufficientDataException):
            jexplore.analyze(csv_path)

    def test_failed_samples_are_ignored(self):
        records = [record(i, 20.0 + i, 10.0 - i) for i in range(4)]
        failed = record(4, 1.0, 1.0).model_copy(
            update={"status": "error", "power_w": None, "time_s": None}
        )

        report = analyze_records(records + [failed])

        assert report.n_samples == 4
        assert report.spearman_rho == pytest.approx(-1.0)

    def test_svg(self, seed_42_csv, tmp_path):
        pytest.importorskip("matplotlib")
        first, second = tmp_path / "first.svg", tmp_path / "second.svg"

        jexplore.analyze(seed_42_csv, svg_path=first)
        jexplore.analyze(seed_42_csv, svg_path=second)

        text = first.read_text()
        assert "<svg" in text
        assert first.read_bytes() == second.read_bytes()
