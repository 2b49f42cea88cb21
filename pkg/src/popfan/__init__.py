"""Probabilistic population forecasts from ARIMA density bands.

Fits Box-Jenkins ARIMA models to annual density series, builds analytic
prediction intervals from psi-weights, and carries their relative widths
over to externally produced cohort-component point forecasts.
"""

__version__ = "0.1.0"

from popfan.errors import (
    AlignmentError,
    ArgumentError,
    ConfigError,
    DataError,
    DegenerateSeriesError,
    InsufficientDataError,
    NumericalError,
    PopfanError,
    SearchFailureError,
)
from popfan.series import AnnualSeries, acf, adf_test, difference, ljung_box, pacf
from popfan.arima import (
    ArimaFit,
    ArimaOrder,
    ForecastBand,
    TrendModel,
    diagnose,
    fit_css_lm,
    fit_trend,
    forecast,
    model_search,
    psi_weights,
    pseudo_r2,
)
from popfan.bridge import build_report, relative_widths, to_density, translate

__all__ = [
    "AlignmentError",
    "AnnualSeries",
    "ArgumentError",
    "ArimaFit",
    "ArimaOrder",
    "ConfigError",
    "DataError",
    "DegenerateSeriesError",
    "ForecastBand",
    "InsufficientDataError",
    "NumericalError",
    "PopfanError",
    "SearchFailureError",
    "TrendModel",
    "acf",
    "adf_test",
    "build_report",
    "diagnose",
    "difference",
    "fit_css_lm",
    "fit_trend",
    "forecast",
    "ljung_box",
    "model_search",
    "pacf",
    "psi_weights",
    "pseudo_r2",
    "relative_widths",
    "to_density",
    "translate",
]
