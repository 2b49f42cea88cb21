"""Carry ARIMA density intervals over to external population forecasts.

Density bands are turned into signed relative deviations of their bounds
from the forecast mean; those deviations are then applied multiplicatively
to a cohort-component point forecast for the same year.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from popfan.arima import ForecastBand
from popfan.errors import AlignmentError, ArgumentError, DegenerateSeriesError
from popfan.series import AnnualSeries

ESTONIA_LAND_AREA_KM2 = 42_388.0


@dataclass(frozen=True)
class DensitySeries:
    series: AnnualSeries
    # a single area, or one denominator per year (e.g. housing units)
    land_area: float | tuple[float, ...]

    def denominators(self) -> np.ndarray:
        if isinstance(self.land_area, tuple):
            return np.asarray(self.land_area, dtype=float)
        return np.full(len(self.series), float(self.land_area))

    def population(self) -> np.ndarray:
        return self.series.as_array() * self.denominators()


@dataclass(frozen=True)
class RelativeWidths:
    year: int
    level: float
    r_lower: float
    r_upper: float


@dataclass(frozen=True)
class TranslatedBand:
    year: int
    level: float
    point: float
    lower: int
    upper: int
    # unrounded bounds, kept so the consistency invariant can be checked
    lower_exact: float = math.nan
    upper_exact: float = math.nan

    @property
    def half_width(self) -> float:
        return (self.upper - self.lower) / 2.0


@dataclass
class ReportTables:
    points: dict[int, float] = field(default_factory=dict)
    density_bands: list[ForecastBand] = field(default_factory=list)
    widths: list[RelativeWidths] = field(default_factory=list)
    translated: dict[float, list[TranslatedBand]] = field(default_factory=dict)
    levels: tuple[float, ...] = ()

    def widths_for(self, year: int, level: float) -> RelativeWidths:
        for w in self.widths:
            if w.year == year and w.level == level:
                return w
        raise KeyError((year, level))


def to_density(population: AnnualSeries, land_area: float | Sequence[float]) -> DensitySeries:
    """Population per unit of denominator, year by year."""
    if isinstance(land_area, (int, float)):
        if not land_area > 0:
            raise ArgumentError("land area must be positive", "bridge")
        denom: float | tuple[float, ...] = float(land_area)
        div = np.full(len(population), denom)
    else:
        denom = tuple(float(a) for a in land_area)
        if len(denom) != len(population):
            raise AlignmentError("denominator series length differs from population", "bridge")
        if any(not a > 0 for a in denom):
            raise ArgumentError("denominators must be positive", "bridge")
        div = np.asarray(denom)
    pop = population.as_array()
    if np.any(pop < 0):
        raise ArgumentError("population values must be nonnegative", "bridge")
    return DensitySeries(AnnualSeries(population.start_year, pop / div), denom)


def relative_widths(band: ForecastBand, level: float) -> RelativeWidths:
    if not band.mean > 0:
        raise DegenerateSeriesError(
            f"forecast mean for {band.year} is not positive ({band.mean})", "bridge"
        )
    if level not in band.intervals:
        raise ArgumentError(f"level {level} missing from the {band.year} band", "bridge")
    lo, hi = band.intervals[level]
    return RelativeWidths(
        year=band.year,
        level=level,
        r_lower=(lo - band.mean) / band.mean,
        r_upper=(hi - band.mean) / band.mean,
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def translate(point: float, widths: RelativeWidths) -> TranslatedBand:
    if not point > 0:
        raise ArgumentError(f"point forecast must be positive, got {point}", "bridge")
    lo = point * (1.0 + widths.r_lower)
    hi = point * (1.0 + widths.r_upper)
    return TranslatedBand(
        year=widths.year,
        level=widths.level,
        point=point,
        lower=round_half_up(lo),
        upper=round_half_up(hi),
        lower_exact=lo,
        upper_exact=hi,
    )


def round_band(band: ForecastBand, decimals: int) -> ForecastBand:
    """Band with mean and bounds rounded as a printed table would show them."""
    return ForecastBand(
        year=band.year,
        horizon=band.horizon,
        mean=round(band.mean, decimals),
        se=band.se,
        intervals={lv: (round(lo, decimals), round(hi, decimals)) for lv, (lo, hi) in band.intervals.items()},
    )


def build_report(
    ccm_points: Mapping[int, float],
    density_bands: Sequence[ForecastBand],
    levels: Sequence[float],
    *,
    density_decimals: int | None = None,
) -> ReportTables:
    """Assemble the point, density, relative-width and translated tables.

    With ``density_decimals`` set, relative widths are computed from bands
    rounded to that many decimals, reproducing a published rounding chain.
    """
    by_year = {b.year: b for b in density_bands}
    missing = sorted(set(ccm_points) - set(by_year))
    if missing:
        raise AlignmentError(
            f"no density band for point-forecast years {', '.join(map(str, missing))}", "bridge"
        )
    years = sorted(ccm_points)
    bands = [by_year[y] for y in years]
    if density_decimals is not None:
        bands = [round_band(b, density_decimals) for b in bands]
    tables = ReportTables(
        points={y: float(ccm_points[y]) for y in years},
        density_bands=bands,
        levels=tuple(levels),
    )
    for level in levels:
        tables.translated[level] = []
    for band in bands:
        for level in levels:
            w = relative_widths(band, level)
            tables.widths.append(w)
            tb = translate(tables.points[band.year], w)
            _check_translated(tb, w)
            tables.translated[level].append(tb)
    return tables


def _check_translated(tb: TranslatedBand, w: RelativeWidths) -> None:
    if not tb.lower <= tb.point <= tb.upper:
        raise DegenerateSeriesError(f"translated bounds for {tb.year} do not bracket the point", "bridge")
    if abs((tb.upper_exact - tb.point) / tb.point - w.r_upper) > 1e-6:
        raise DegenerateSeriesError(f"translated upper bound for {tb.year} is inconsistent", "bridge")
