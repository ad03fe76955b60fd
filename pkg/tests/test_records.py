import pytest

import jexplore
from jexplore.records import CsvRecordWriter, format_float

HEADER = (
    "sample_id,client_id,cores_c1,cores_c2,cores_c3,freq_c1_khz,freq_c2_khz,"
    "freq_c3_khz,gpu_freq_khz,emc_freq_khz,time_s,power_w,memory_mb,status,timestamp\n"
)


@pytest.fixture
def records(orin_space) -> list[jexplore.SampleRecord]:
    configs = jexplore.random_sample(orin_space, 1, 3)
    return [
        jexplore.SampleRecord(
            sample_id="000000",
            client_id="sim-0",
            config=orin_space.maximum(),
            time_s=20.0,
            power_w=42.0,
            memory_mb=26000.0,
            status="ok",
            timestamp="0",
        ),
        jexplore.SampleRecord(
            sample_id="000001",
            client_id="board-b",
            config=configs[0],
            time_s=123.456789,
            power_w=14.490587,
            status="ok",
            timestamp="2024-01-01T00:00:00.000Z",
        ),
        jexplore.SampleRecord(
            sample_id="000002",
            client_id="board-b",
            config=configs[1],
            status="timeout",
            timestamp="2",
        ),
    ]


class TestFormatFloat:
    @pytest.mark.parametrize(
        "value, text",
        [
            (20.0, "20.0"),
            (26000.0, "26000.0"),
            (14.490587412587413, "14.490587"),
            (0.12345678, "0.123457"),
            (1e-7, "0.0"),
            (1e20, "100000000000000000000.0"),
            (None, ""),
        ],
    )
    def test_format(self, value, text):
        assert format_float(value) == text


class TestWriteCsv:
    def test_header_only(self, csv_path):
        assert jexplore.write_csv([], csv_path) == len(HEADER)

        assert csv_path.read_bytes() == HEADER.encode()
        assert jexplore.read_csv(csv_path) == []

    def test_rows(self, csv_path, records):
        jexplore.write_csv(records, csv_path)

        lines = csv_path.read_text().splitlines(keepends=True)
        assert lines[0] == HEADER
        assert lines[1] == (
            "000000,sim-0,4,4,4,2200000,2200000,2200000,1300000,3200000,"
            "20.0,42.0,26000.0,ok,0\n"
        )
        assert lines[2].endswith(",123.456789,14.490587,,ok,2024-01-01T00:00:00.000Z\n")
        assert lines[3].endswith(",,,,timeout,2\n")

    def test_every_row_is_flushed(self, csv_path, records):
        with CsvRecordWriter(csv_path) as writer:
            writer.write(records[0])

            assert csv_path.read_bytes() == HEADER.encode() + (
                b"000000,sim-0,4,4,4,2200000,2200000,2200000,1300000,3200000,"
                b"20.0,42.0,26000.0,ok,0\n"
            )

    def test_round_trip_is_byte_identical(self, tmp_path, records):
        first, second = tmp_path / "first.csv", tmp_path / "second.csv"
        jexplore.write_csv(records, first)

        read = jexplore.read_csv(first)
        jexplore.write_csv(read, second)

        assert read == records
        assert first.read_bytes() == second.read_bytes()

    def test_quotes_client_ids(self, csv_path, records):
        record = records[0].model_copy(update={"client_id": 'a,"b"'})

        jexplore.write_csv([record], csv_path)

        assert '"a,""b"""' in csv_path.read_text()
        assert jexplore.read_csv(csv_path) == [record]


class TestReadCsv:
    def test_columns_in_any_order(self, csv_path, records):
        jexplore.write_csv(records[:1], csv_path)
        header, row = csv_path.read_text().splitlines()
        order = list(reversed(range(len(header.split(",")))))
        csv_path.write_text(
            ",".join(header.split(",")[i] for i in order)
            + "\n"
            + ",".join(row.split(",")[i] for i in order)
            + "\n"
        )

        assert jexplore.read_csv(csv_path) == records[:1]

    def test_empty_file(self, csv_path):
        csv_path.write_text("")

        with pytest.raises(jexplore.CsvSchemaException):
            jexplore.read_csv(csv_path)

    def test_missing_column(self, csv_path):
        csv_path.write_text(HEADER.replace(",power_w", ""))

        with pytest.raises(jexplore.CsvSchemaException) as exc_info:
            jexplore.read_csv(csv_path)

        assert exc_info.value.missing == ["power_w"]
        assert exc_info.value.extra == []

    def test_unknown_column(self, csv_path):
        csv_path.write_text(HEADER.strip() + ",voltage\n")

        with pytest.raises(jexplore.CsvSchemaException) as exc_info:
            jexplore.read_csv(csv_path)

        assert exc_info.value.extra == ["voltage"]

    def test_invalid_number(self, csv_path, records):
        jexplore.write_csv(records, csv_path)
        text = csv_path.read_text().replace("14.490587", "abc")
        csv_path.write_text(text)

        with pytest.raises(jexplore.CsvRowException) as exc_info:
            jexplore.read_csv(csv_path)

        assert exc_info.value.line == 3
        assert exc_info.value.reason == "power_w is not a number: 'abc'"

    def test_invalid_status(self, csv_path, records):
        jexplore.write_csv(records[:1], csv_path)
        csv_path.write_text(csv_path.read_text().replace(",ok,", ",done,"))

        with pytest.raises(jexplore.CsvRowException) as exc_info:
            jexplore.read_csv(csv_path)

        assert exc_info.value.line == 2

    def test_wrong_cell_count(self, csv_path):
        csv_path.write_text(HEADER + "000000,sim-0\n")

        with pytest.raises(jexplore.CsvRowException, match="expected 15 cells"):
            jexplore.read_csv(csv_path)

    def test_ok_row_without_metrics(self, csv_path, records):
        jexplore.write_csv(records[2:], csv_path)
        csv_path.write_text(csv_path.read_text().replace(",timeout,", ",ok,"))

        with pytest.raises(jexplore.CsvRowException) as exc_info:
            jexplore.read_csv(csv_path)

        assert exc_info.value.line == 2


class TestSampleRecord:
    def test_ok_requires_a_metric(self, max_config):
        with pytest.raises(ValueError, match="requires at least one metric"):
            jexplore.SampleRecord(
                sample_id="000000",
                client_id="sim-0",
                config=max_config,
                status="ok",
                timestamp="0",
            )

    def test_failed_without_metrics(self, max_config):
        record = jexplore.SampleRecord(
            sample_id="000000",
            client_id="sim-0",
            config=max_config,
            status="error",
            timestamp="0",
        )

        assert record.time_s is None
