"""
Dataset files: CSV with header x,y,delta.

delta is 0 or 1; y may be empty only where delta is 0. Row numbers in
error messages count data rows from 1, excluding the header.
"""

import csv
import io
import math
from pathlib import Path
from typing import List, Optional, Tuple

from src.estimators import EstimatorError, Sample
from src.output_writer import OutputWriter, format_float

HEADER = ("x", "y", "delta")


class DatasetError(Exception):
    """Raised for unreadable or invalid dataset files."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetError(f"cannot parse {column}='{text}'", row) from None
    if not math.isfinite(value):
        raise DatasetError(f"{column} must be finite", row)
    return value


def parse_dataset(text: str) -> Sample:
    """
    Parse dataset CSV text.

    Raises:
        DatasetError: On a bad header, a malformed row or no observed response
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty file; expected header x,y,delta") from None
    if tuple(h.strip().lower() for h in header) != HEADER:
        raise DatasetError(f"expected header x,y,delta, got {','.join(header)}")

    records: List[Tuple[float, Optional[float], int]] = []
    for row_number, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            raise DatasetError(f"expected 3 fields, got {len(row)}", row_number)
        x_text, y_text, delta_text = (cell.strip() for cell in row)
        x = _parse_float(x_text, "x", row_number)
        if delta_text not in ("0", "1"):
            raise DatasetError(f"delta must be 0 or 1, got '{delta_text}'", row_number)
        delta = int(delta_text)
        if delta == 1:
            if not y_text:
                raise DatasetError("missing y with delta=1", row_number)
            y: Optional[float] = _parse_float(y_text, "y", row_number)
        else:
            y = None
        records.append((x, y, delta))

    if not records:
        raise DatasetError("dataset has no records")
    if not any(delta == 1 for _, _, delta in records):
        raise DatasetError("dataset needs at least one row with delta=1")
    try:
        return Sample.from_records(records)
    except EstimatorError as exc:
        raise DatasetError(str(exc)) from exc


def read_dataset(path: Path) -> Sample:
    """Read a dataset file; see parse_dataset."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    return parse_dataset(text)


def write_dataset(sample: Sample, path: Path, writer: Optional[OutputWriter] = None) -> Path:
    """Write a sample in the dataset format; missing y is written empty."""
    rows = (
        (format_float(x), format_float(y) if d == 1 else "", int(d))
        for x, y, d in zip(sample.x, sample.y, sample.delta)
    )
    return (writer or OutputWriter()).write_csv(Path(path), HEADER, rows)

