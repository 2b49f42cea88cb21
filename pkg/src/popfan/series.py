"""Annual series type and the statistical primitives used for identification.

Differencing, sample ACF/PACF, the Ljung-Box portmanteau statistic and an
augmented Dickey-Fuller unit-root test. Everything here is a pure function
of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from popfan.errors import ArgumentError, DegenerateSeriesError, InsufficientDataError

# MacKinnon (2010) response surface, constant-only case, 5% level:
# crit(T) = b_inf + b1/T + b2/T^2 + b3/T^3
_ADF_5PCT_CONST = (-2.86154, -2.8903, -4.234, -40.040)


@dataclass(frozen=True)
class AnnualSeries:
    """Real-valued series observed once per calendar year."""

    start_year: int
    values: tuple[float, ...]

    def __init__(self, start_year: int, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if len(vals) < 1:
            raise InsufficientDataError("series must hold at least one value", "series")
        if not all(math.isfinite(v) for v in vals):
            raise ArgumentError("series values must be finite", "series")
        object.__setattr__(self, "start_year", int(start_year))
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_year(self) -> int:
        return self.start_year + len(self.values) - 1

    @property
    def years(self) -> list[int]:
        return [self.start_year + i for i in range(len(self.values))]

    def year_of(self, index: int) -> int:
        return self.start_year + index

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class AcfResult:
    n: int
    max_lag: int
    correlations: tuple[float, ...]
    band: float

    def significant_lags(self) -> list[int]:
        return [k + 1 for k, r in enumerate(self.correlations) if abs(r) > self.band]


@dataclass(frozen=True)
class LjungBoxResult:
    q_stat: float
    df: int
    p_value: float


def significance_band(n: int, multiplier: float = 2.0) -> float:
    """Approximate white-noise band for sample autocorrelations."""
    if n < 1:
        raise ArgumentError("sample size must be positive", "series")
    return multiplier / math.sqrt(n)


def difference(series: AnnualSeries, d: int) -> AnnualSeries:
    if d < 0 or d > 2:
        raise ArgumentError(f"differencing degree must be 0, 1 or 2, got {d}", "series")
    if len(series) <= d:
        raise InsufficientDataError(
            f"cannot difference a series of length {len(series)} {d} times", "series"
        )
    if d == 0:
        return series
    return AnnualSeries(series.start_year + d, np.diff(series.as_array(), n=d))


def _autocorrelations(x: np.ndarray, max_lag: int) -> np.ndarray:
    dev = x - x.mean()
    denom = float(dev @ dev)
    # relative threshold: affine-invariant check for a constant series
    if denom <= (1e-14 * max(1.0, float(np.max(np.abs(x))))) ** 2 * len(x):
        raise DegenerateSeriesError("series has zero sample variance", "series")
    n = len(x)
    return np.array([float(dev[: n - k] @ dev[k:]) / denom for k in range(1, max_lag + 1)])


def _check_lag(n: int, max_lag: int) -> None:
    if max_lag < 1:
        raise ArgumentError("max_lag must be positive", "series")
    if max_lag >= n:
        raise ArgumentError(f"max_lag {max_lag} must be below series length {n}", "series")


def acf(series: AnnualSeries, max_lag: int, band_multiplier: float = 2.0) -> AcfResult:
    """Sample autocorrelations r_1..r_max_lag with the full-sample denominator."""
    x = series.as_array()
    _check_lag(len(x), max_lag)
    r = _autocorrelations(x, max_lag)
    return AcfResult(
        n=len(x),
        max_lag=max_lag,
        correlations=tuple(float(v) for v in r),
        band=significance_band(len(x), band_multiplier),
    )


def durbin_levinson(correlations: Sequence[float]) -> list[float]:
    """Partial autocorrelations from autocorrelations r_1..r_m."""
    r = np.asarray(correlations, dtype=float)
    m = len(r)
    out: list[float] = []
    phi = np.zeros(0)
    v = 1.0
    for k in range(1, m + 1):
        if k == 1:
            a = r[0]
        else:
            a = (r[k - 1] - phi @ r[k - 2 :: -1]) / v
        phi = np.concatenate([phi - a * phi[::-1], [a]])
        v *= 1.0 - a * a
        out.append(float(a))
        if v <= 0.0:
            # perfectly predictable: higher partials are undefined, report 0
            out.extend([0.0] * (m - k))
            break
    return out


def pacf(series: AnnualSeries, max_lag: int) -> list[float]:
    x = series.as_array()
    _check_lag(len(x), max_lag)
    return durbin_levinson(_autocorrelations(x, max_lag))


def ljung_box(
    correlations: Sequence[float], n: int, m: int, fitted_params: int = 0
) -> LjungBoxResult:
    """Portmanteau Q over the first ``m`` autocorrelations.

    Degrees of freedom are ``m - fitted_params`` clamped to at least 1.
    """
    if m < 1:
        raise ArgumentError("m must be at least 1", "series")
    if n <= m:
        raise ArgumentError(f"sample size {n} must exceed lag count {m}", "series")
    if len(correlations) < m:
        raise ArgumentError(f"need {m} correlations, got {len(correlations)}", "series")
    r = np.asarray(correlations[:m], dtype=float)
    k = np.arange(1, m + 1)
    q = n * (n + 2) * math.fsum(r * r / (n - k))
    df = max(m - int(fitted_params), 1)
    p = float(stats.chi2.sf(q, df)) if q > 0 else 1.0
    return LjungBoxResult(q_stat=q, df=df, p_value=min(max(p, 0.0), 1.0))


def adf_critical_value(nobs: int) -> float:
    """5% Dickey-Fuller critical value (constant, no trend) for ``nobs`` regression rows."""
    b0, b1, b2, b3 = _ADF_5PCT_CONST
    return b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3


def adf_tau(y: np.ndarray, lag_order: int = 0) -> float:
    dy = np.diff(y)
    rows = len(dy) - lag_order
    cols = [np.ones(rows), y[lag_order:-1]]
    for i in range(1, lag_order + 1):
        cols.append(dy[lag_order - i : len(dy) - i])
    X = np.column_stack(cols)
    target = dy[lag_order:]
    coef, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateSeriesError("Dickey-Fuller regression is rank deficient", "series")
    resid = target - X @ coef
    dof = rows - X.shape[1]
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    se = math.sqrt(cov[1, 1])
    if se == 0.0:
        # exact fit: sign of the coefficient decides
        return -math.inf if coef[1] < 0 else math.inf
    return float(coef[1] / se)


def adf_test(series: AnnualSeries, lag_order: int = 0) -> tuple[float, bool]:
    """Augmented Dickey-Fuller test with a constant; returns (tau, reject at 5%)."""
    if lag_order < 0:
        raise ArgumentError("lag_order must be nonnegative", "series")
    if len(series) <= lag_order + 10:
        raise InsufficientDataError(
            f"ADF with {lag_order} lags needs more than {lag_order + 10} values, "
            f"got {len(series)}",
            "series",
        )
    y = series.as_array()
    tau = adf_tau(y, lag_order)
    nobs = len(y) - 1 - lag_order
    return tau, bool(tau < adf_critical_value(nobs))
