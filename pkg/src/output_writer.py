"""
Result files for the band, test and simulate commands.

Every file is written to a temporary sibling and moved into place with
os.replace, so a reader never sees a half-written file. Nothing written
here carries a timestamp: identical inputs give byte-identical files.
"""

import csv
import io
import json
import os
import uuid
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.bands import BandError, BandResult, flag_names, parse_flags
from src.kernelmath import KernelConstants
from src.logger import StructuredLogger, get_logger

BAND_COLUMNS = ("x", "mhat", "fhat", "sigma2", "lower", "upper", "flags")
FLOAT_FORMAT = ".17g"


class OutputWriterError(Exception):
    """Raised when a result file cannot be written or read back."""


def format_float(value: float) -> str:
    """17 significant digits; enough for an exact round trip."""
    return format(float(value), FLOAT_FORMAT)


def band_paths(out: Path) -> Tuple[Path, Path]:
    """(csv, json header) paths for a band written to `out`."""
    csv_path = out if out.suffix else out.with_suffix(".csv")
    return csv_path, csv_path.with_suffix(".json")


class OutputWriter:
    """Atomic writer for CSV, JSON and SVG results."""

    def __init__(self, logger: Optional[StructuredLogger] = None):
        self._logger = logger or get_logger("output_writer")

    def write_text(self, path: Path, text: str) -> Path:
        """Write text to path atomically."""
        path = Path(path)
        temp_path = path.parent / f".{path.name}.{uuid.uuid4().hex}.tmp"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(temp_path, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(temp_path, path)
            self._logger.debug("Wrote output file", path=str(path), size=len(text))
            return path
        except Exception as exc:
            self._logger.error("Failed to write output", path=str(path), error_type=type(exc).__name__)
            try:
                if temp_path.exists():
                    temp_path.unlink()
            except Exception:
                pass
            raise OutputWriterError(f"failed to write {path}") from exc

    def write_json(self, path: Path, payload: Dict[str, Any]) -> Path:
        return self.write_text(path, json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def write_csv(self, path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
        return self.write_text(path, buffer.getvalue())

    def write_band(self, band: BandResult, out: Path) -> Tuple[Path, Path]:
        """Band CSV plus its JSON header next to it."""
        csv_path, json_path = band_paths(Path(out))
        rows = (
            (float(x), float(m), float(f), float(s), float(lo), float(hi), flag_names(int(fl)))
            for x, m, f, s, lo, hi, fl in zip(
                band.grid, band.mhat, band.fhat, band.sigma2, band.lower, band.upper, band.flags
            )
        )
        self.write_csv(csv_path, BAND_COLUMNS, rows)
        self.write_json(json_path, band.header())
        return csv_path, json_path

    def write_rows(self, path: Path, rows: List[Dict[str, Any]]) -> Path:
        """CSV from a list of dicts sharing the first row's keys."""
        if not rows:
            raise OutputWriterError("no rows to write")
        header = list(rows[0].keys())
        return self.write_csv(path, header, ([row[key] for key in header] for row in rows))

    def write_ecdf(self, path: Path, x: np.ndarray, series: Dict[str, np.ndarray]) -> Path:
        """ECDF table: column t, then one column per named series."""
        names = list(series)
        rows = ([float(t)] + [float(series[name][i]) for name in names] for i, t in enumerate(x))
        return self.write_csv(path, ["t"] + names, rows)


def read_band(csv_path: Path) -> BandResult:
    """
    Re-read a band written by OutputWriter.write_band.

    Raises:
        OutputWriterError: If either file is missing or malformed
    """
    csv_path, json_path = band_paths(Path(csv_path))
    try:
        header = json.loads(json_path.read_text(encoding="utf-8"))
        with open(csv_path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            columns = next(reader)
            if tuple(columns) != BAND_COLUMNS:
                raise OutputWriterError(f"unexpected band columns: {columns}")
            records = list(reader)
    except (OSError, ValueError, StopIteration) as exc:
        raise OutputWriterError(f"cannot read band from {csv_path}") from exc

    try:
        values = np.array([[float(v) for v in row[:6]] for row in records], dtype=float).reshape(-1, 6)
        flags = np.array([parse_flags(row[6]) for row in records], dtype=np.int64)
    except (ValueError, IndexError, BandError) as exc:
        raise OutputWriterError(f"malformed band row in {csv_path}: {exc}") from exc
    return BandResult(
        method=header["method"],
        grid=values[:, 0],
        mhat=values[:, 1],
        fhat=values[:, 2],
        sigma2=values[:, 3],
        lower=values[:, 4],
        upper=values[:, 5],
        flags=flags,
        alpha=header["alpha"],
        n=header["n"],
        h=header["h"],
        delta=header["delta"],
        beta=header["beta"],
        kernel=header["kernel"],
        constants=KernelConstants(
            c_k=header["c_K"], c1=header["C1"], c2=header["C2"], support=header["A"]
        ),
        d_n=header["d_n"],
        x_alpha=header["x_alpha"],
    )
