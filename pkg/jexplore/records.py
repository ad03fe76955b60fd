"""CSV persistence of sample records."""

import contextlib
import csv
import io
import logging
from pathlib import Path
from typing import Final, Iterable, Optional, Union

from pydantic import ValidationError

from .exceptions import CsvRowException, CsvSchemaException
from .model import CONFIG_FIELDS, Configuration, SampleRecord

_logger: Final = logging.getLogger(__name__)

METRIC_COLUMNS: Final = ("time_s", "power_w", "memory_mb")

CSV_COLUMNS: Final[tuple[str, ...]] = (
    "sample_id",
    "client_id",
    *CONFIG_FIELDS,
    *METRIC_COLUMNS,
    "status",
    "timestamp",
)


def format_float(value: Optional[float]) -> str:
    """Render a metric with up to 6 decimals and without exponent.

    Trailing zeros are dropped but at least one decimal is kept, an absent
    value is rendered as an empty cell.
    """
    if value is None:
        return ""
    text = f"{value:.6f}".rstrip("0")
    if text.endswith("."):
        text += "0"
    return text


def record_row(record: SampleRecord) -> list[str]:
    return [
        record.sample_id,
        record.client_id,
        *(str(getattr(record.config, name)) for name in CONFIG_FIELDS),
        *(format_float(record.metric(name)) for name in METRIC_COLUMNS),
        record.status,
        record.timestamp,
    ]


class CsvRecordWriter(contextlib.AbstractContextManager):
    """Writes records to a CSV file, one flushed row at a time."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.bytes_written = 0
        self._buffer = io.StringIO()
        self._writer = csv.writer(self._buffer, lineterminator="\n")
        self._file = open(self.path, "wb")
        self._write_row(CSV_COLUMNS)

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()

    def _write_row(self, row: Iterable[str]) -> None:
        self._buffer.seek(0)
        self._buffer.truncate()
        self._writer.writerow(row)
        data = self._buffer.getvalue().encode("utf-8")
        self._file.write(data)
        self._file.flush()
        self.bytes_written += len(data)

    def write(self, record: SampleRecord) -> None:
        self._write_row(record_row(record))

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()
            _logger.debug("Wrote %d bytes to %s", self.bytes_written, self.path)


def write_csv(records: Iterable[SampleRecord], path: Union[str, Path]) -> int:
    """Write records to a CSV file and return the number of bytes written."""
    with CsvRecordWriter(path) as writer:
        for record in records:
            writer.write(record)
    return writer.bytes_written


def _parse_metric(cells: dict[str, str], column: str) -> Optional[float]:
    cell = cells[column]
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"{column} is not a number: {cell!r}") from None


def _parse_config_value(cells: dict[str, str], column: str) -> int:
    cell = cells[column]
    try:
        return int(cell)
    except ValueError:
        raise ValueError(f"{column} is not an integer: {cell!r}") from None


def _parse_row(cells: dict[str, str]) -> SampleRecord:
    config = Configuration(
        **{name: _parse_config_value(cells, name) for name in CONFIG_FIELDS}
    )
    return SampleRecord(
        sample_id=cells["sample_id"],
        client_id=cells["client_id"],
        config=config,
        time_s=_parse_metric(cells, "time_s"),
        power_w=_parse_metric(cells, "power_w"),
        memory_mb=_parse_metric(cells, "memory_mb"),
        status=cells["status"],
        timestamp=cells["timestamp"],
    )


def read_csv(path: Union[str, Path]) -> list[SampleRecord]:
    """Read records written by :py:func:`write_csv`.

    Columns may appear in any order, but all of them must be present.

    :raises CsvSchemaException: if columns are missing or unknown
    :raises CsvRowException: if a row cannot be parsed
    """
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise CsvSchemaException(missing=CSV_COLUMNS, extra=[])

        missing = [c for c in CSV_COLUMNS if c not in header]
        extra = [c for c in header if c not in CSV_COLUMNS]
        if missing or extra:
            raise CsvSchemaException(missing=missing, extra=extra)

        records = []
        for row in reader:
            if len(row) != len(header):
                raise CsvRowException(
                    reader.line_num, f"expected {len(header)} cells, got {len(row)}"
                )
            try:
                records.append(_parse_row(dict(zip(header, row))))
            except ValidationError as e:
                raise CsvRowException(
                    reader.line_num, f"{e.error_count()} invalid cell(s): {e}"
                ) from e
            except ValueError as e:
                raise CsvRowException(reader.line_num, str(e)) from e

    _logger.debug("Read %d records from %s", len(records), path)
    return records
