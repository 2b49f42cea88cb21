"""CSV ingestion for annual series and point-forecast files."""

from __future__ import annotations

import csv
import io
import math
import warnings
from pathlib import Path

from popfan.bridge import DensitySeries, to_density
from popfan.errors import DataError, FileIOError
from popfan.series import AnnualSeries

SERIES_HEADERS = ("population", "density")


def _read_rows(path: str | Path) -> list[tuple[int, list[str]]]:
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}", "data") from exc
    rows = []
    reader = csv.reader(io.StringIO(text, newline=""))
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        rows.append((reader.line_num, [c.strip() for c in row]))
    return rows


def _parse_body(path, rows, value_name: str) -> list[tuple[int, float]]:
    out = []
    seen: set[int] = set()
    for line, row in rows:
        if len(row) != 2:
            raise DataError(f"{path}:{line}: expected 2 fields, got {len(row)}", "data")
        try:
            year = int(row[0])
            value = float(row[1])
        except ValueError:
            raise DataError(f"{path}:{line}: cannot parse {row!r}", "data") from None
        if not math.isfinite(value):
            raise DataError(f"{path}:{line}: {value_name} is not finite", "data")
        if year in seen:
            raise DataError(f"{path}:{line}: duplicate year {year}", "data")
        seen.add(year)
        out.append((year, value))
    return out


def load_series_csv(path: str | Path, land_area: float | None = None) -> AnnualSeries | DensitySeries:
    """Read ``year,population`` or ``year,density``.

    Population files become a DensitySeries when ``land_area`` is given.
    Years must be consecutive and ascending.
    """
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty file", "data")
    _, header = rows[0]
    if len(header) != 2 or header[0].lower() != "year" or header[1].lower() not in SERIES_HEADERS:
        raise DataError(f"{path}:1: header must be year,population or year,density", "data")
    kind = header[1].lower()
    body = _parse_body(path, rows[1:], kind)
    if not body:
        raise DataError(f"{path}: no data rows", "data")
    years = [y for y, _ in body]
    for a, b in zip(years, years[1:]):
        if b < a:
            raise DataError(f"{path}: years are not ascending ({a} then {b})", "data")
    missing = sorted(set(range(years[0], years[-1] + 1)) - set(years))
    if missing:
        raise DataError(f"{path}: missing years {', '.join(map(str, missing))}", "data")
    series = AnnualSeries(years[0], [v for _, v in body])
    if kind == "population":
        if any(v < 0 for _, v in body):
            raise DataError(f"{path}: negative population", "data")
        if land_area is not None:
            return to_density(series, land_area)
        return series
    if any(v < 0 for _, v in body):
        raise DataError(f"{path}: negative density", "data")
    if land_area is not None:
        return DensitySeries(series, float(land_area))
    return series


def load_points_csv(path: str | Path) -> dict[int, float]:
    rows = _read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty file", "data")
    _, header = rows[0]
    if [h.lower() for h in header] != ["year", "forecast"]:
        raise DataError(f"{path}:1: header must be year,forecast", "data")
    body = _parse_body(path, rows[1:], "forecast")
    if not body:
        warnings.warn(f"{path}: no point forecasts", UserWarning, stacklevel=2)
    for year, value in body:
        if value < 0:
            raise DataError(f"{path}: negative forecast {value} for {year}", "data")
    return dict(sorted(body))
