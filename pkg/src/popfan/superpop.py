"""Monte Carlo path ensembles for checking analytic forecast intervals.

Each simulated path is one more draw from the process the fitted model
describes. Path ``i`` gets its own generator seeded from a 64-bit mix of
(master_seed, i), so results do not depend on how the paths are scheduled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from popfan.arima import ArimaFit, ForecastBand, ar_is_stationary, extend_paths
from popfan.errors import AlignmentError, ArgumentError

_MASK64 = (1 << 64) - 1
MIN_PATHS_FOR_QUANTILES = 1000


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def path_seed(master_seed: int, path_index: int) -> int:
    return splitmix64(splitmix64(master_seed & _MASK64) ^ (path_index & _MASK64))


@dataclass(frozen=True)
class PathEnsemble:
    origin_year: int
    horizon: int
    n_paths: int
    master_seed: int
    # shape (n_paths, horizon); column k is year origin_year + k + 1
    paths: np.ndarray

    @property
    def years(self) -> list[int]:
        return [self.origin_year + k for k in range(1, self.horizon + 1)]


@dataclass(frozen=True)
class CoverageResult:
    level: float
    coverage: tuple[float, ...]
    n_paths: int


def _innovations(n_paths: int, horizon: int, master_seed: int, sd: float) -> np.ndarray:
    out = np.empty((n_paths, horizon))
    for i in range(n_paths):
        out[i] = np.random.default_rng(path_seed(master_seed, i)).standard_normal(horizon)
    return out * sd


def simulate_paths(
    fit: ArimaFit, origin_year: int, horizon: int, n_paths: int, master_seed: int
) -> PathEnsemble:
    """Simulate ``n_paths`` futures with Gaussian innovations of variance ``fit.mse``.

    Paths start from the end of the fitted data; ``origin_year`` must be that
    last observed year.
    """
    if fit.working is None or fit.residuals is None:
        raise ArgumentError("fit carries no data to simulate from", "superpop")
    if not ar_is_stationary(fit.ar) or not math.isfinite(fit.mse) or fit.mse < 0:
        raise ArgumentError("fit is not a valid stationary model", "superpop")
    if horizon < 1 or n_paths < 1:
        raise ArgumentError("horizon and n_paths must be positive", "superpop")
    if origin_year != fit.last_year:
        raise AlignmentError(
            f"simulation origin {origin_year} must equal the last observed year {fit.last_year}",
            "superpop",
        )
    eps = _innovations(n_paths, horizon, master_seed, math.sqrt(fit.mse))
    paths = extend_paths(fit, horizon, eps)
    return PathEnsemble(origin_year, horizon, n_paths, master_seed, paths)


def empirical_quantiles(ensemble: PathEnsemble, level: float) -> list[tuple[float, float]]:
    """Per-horizon (lower, upper) order statistics, linearly interpolated."""
    if not 0.0 < level <= 1.0:
        raise ArgumentError("level must lie in (0, 1]", "superpop")
    if ensemble.n_paths < MIN_PATHS_FOR_QUANTILES:
        warnings.warn(
            f"only {ensemble.n_paths} paths; quantiles will be imprecise",
            UserWarning,
            stacklevel=2,
        )
    q = np.quantile(ensemble.paths, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return [(float(lo), float(hi)) for lo, hi in q.T]


def coverage_check(
    ensemble: PathEnsemble, analytic_bands: Sequence[ForecastBand], level: float
) -> CoverageResult:
    """Fraction of paths inside each band; a path on a bound counts as inside."""
    if len(analytic_bands) != ensemble.horizon:
        raise AlignmentError(
            f"{len(analytic_bands)} bands for a {ensemble.horizon}-step ensemble", "superpop"
        )
    fractions = []
    for k, (band, year) in enumerate(zip(analytic_bands, ensemble.years)):
        if band.year != year:
            raise AlignmentError(f"band year {band.year} does not match path year {year}", "superpop")
        lo, hi = band.intervals[level]
        col = ensemble.paths[:, k]
        fractions.append(float(np.count_nonzero((col >= lo) & (col <= hi)) / ensemble.n_paths))
    return CoverageResult(level, tuple(fractions), ensemble.n_paths)
