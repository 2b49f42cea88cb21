"""ARIMA estimation and forecasting.

Models are fitted by conditional least squares (presample values set to
zero) on the detrended, differenced series, minimised with a
Levenberg-Marquardt loop whose iterations are kept as a trace. Forecast
intervals come from the psi-weights of the integrated model.

Sign convention throughout::

    w_t = sum_i ar[i] * w_{t-i} + e_t - sum_j ma[j] * e_{t-j}
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from popfan.errors import (
    ArgumentError,
    DegenerateSeriesError,
    InsufficientDataError,
    NumericalError,
    PopfanError,
    SearchFailureError,
)
from popfan.series import (
    AcfResult,
    AnnualSeries,
    LjungBoxResult,
    acf,
    adf_test,
    difference,
    ljung_box,
)

logger = logging.getLogger(__name__)

DATE_CONVENTIONS = ("index", "calendar")
STATIONARITY_MARGIN = 1e-6
LAMBDA_INIT = 0.1
LAMBDA_ACCEPT = 0.4
LAMBDA_REJECT = 10.0
LAMBDA_MAX = 1e12
DEFAULT_INIT = 0.1


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name in ("p", "d", "q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ArgumentError(f"order {name} must be a nonnegative integer", "arima")
        if self.d > 2:
            raise ArgumentError("differencing degree above 2 is not supported", "arima")

    @property
    def n_params(self) -> int:
        return self.p + self.q

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class TrendModel:
    """Straight line in a date variable.

    Under the ``"index"`` convention the first observed year is date 1;
    under ``"calendar"`` the date is the year itself.
    """

    intercept: float
    slope: float
    date_convention: str = "index"
    start_year: int = 0

    def date(self, year: float) -> float:
        if self.date_convention == "index":
            return year - self.start_year + 1
        return float(year)

    def __call__(self, year: float) -> float:
        return self.intercept + self.slope * self.date(year)


@dataclass(frozen=True)
class IterationRecord:
    itn: int
    ess: float
    lam: float
    params: tuple[float, ...]


@dataclass(frozen=True)
class ArimaFit:
    order: ArimaOrder
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    rss: float
    mse: float
    rmse: float
    n_obs: int
    n_effective: int
    trace: tuple[IterationRecord, ...] = ()
    converged: bool = True
    trend: TrendModel | None = None
    # detrended (not yet differenced) series the ARMA recursion runs on
    working: AnnualSeries | None = None
    residuals: AnnualSeries | None = None
    stderr: tuple[float, ...] = ()
    status: str = "ok"

    @property
    def last_year(self) -> int:
        if self.working is None:
            raise ArgumentError("fit carries no data; cannot anchor a forecast", "arima")
        return self.working.end_year

    @property
    def params(self) -> tuple[float, ...]:
        return self.ar + self.ma


@dataclass(frozen=True)
class ForecastBand:
    year: int
    horizon: int
    mean: float
    se: float
    intervals: Mapping[float, tuple[float, float]] = field(default_factory=dict)

    def lower(self, level: float) -> float:
        return self.intervals[level][0]

    def upper(self, level: float) -> float:
        return self.intervals[level][1]


@dataclass(frozen=True)
class DiagnosticsReport:
    acf: AcfResult
    ljung_box: LjungBoxResult
    adequate: bool

    @property
    def significant_lags(self) -> list[int]:
        return self.acf.significant_lags()


def fit_trend(series: AnnualSeries, convention: str = "index") -> tuple[TrendModel, AnnualSeries]:
    """Least-squares line through the series; returns the line and the residuals."""
    if convention not in DATE_CONVENTIONS:
        raise ArgumentError(f"unknown date convention {convention!r}", "arima")
    if len(series) < 3:
        raise InsufficientDataError("trend fit needs at least 3 values", "arima")
    y = series.as_array()
    proto = TrendModel(0.0, 0.0, convention, series.start_year)
    t = np.array([proto.date(yr) for yr in series.years], dtype=float)
    tc = t - t.mean()
    slope = float(tc @ (y - y.mean()) / (tc @ tc))
    intercept = float(y.mean() - slope * t.mean())
    trend = TrendModel(intercept, slope, convention, series.start_year)
    resid = y - (intercept + slope * t)
    return trend, AnnualSeries(series.start_year, resid)


def _split(params: Sequence[float], order: ArimaOrder) -> tuple[np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=float)
    if params.shape != (order.n_params,):
        raise ArgumentError(
            f"order {order} takes {order.n_params} parameters, got {params.size}", "arima"
        )
    return params[: order.p], params[order.p :]


def css_residuals(params: Sequence[float], w: Sequence[float], order: ArimaOrder) -> np.ndarray:
    ar, ma = _split(params, order)
    w = np.asarray(w, dtype=float)
    return signal.lfilter(np.r_[1.0, -ar], np.r_[1.0, -ma], w)


def css_objective(params: Sequence[float], w: Sequence[float], order: ArimaOrder) -> float:
    e = css_residuals(params, w, order)
    return float(e @ e)


def _lag(x: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(x)
    out[k:] = x[: len(x) - k]
    return out


def css_jacobian(
    params: Sequence[float], w: Sequence[float], order: ArimaOrder
) -> tuple[np.ndarray, np.ndarray]:
    """Residuals and their derivatives with respect to (ar..., ma...)."""
    ar, ma = _split(params, order)
    w = np.asarray(w, dtype=float)
    den = np.r_[1.0, -ma]
    e = signal.lfilter(np.r_[1.0, -ar], den, w)
    cols = [signal.lfilter([1.0], den, -_lag(w, i)) for i in range(1, order.p + 1)]
    cols += [signal.lfilter([1.0], den, _lag(e, j)) for j in range(1, order.q + 1)]
    jac = np.column_stack(cols) if cols else np.zeros((len(w), 0))
    return e, jac


def ar_is_stationary(ar: Sequence[float], margin: float = STATIONARITY_MARGIN) -> bool:
    ar = np.asarray(ar, dtype=float)
    if ar.size == 0:
        return True
    if ar.size == 1:
        return abs(ar[0]) < 1.0 - margin
    companion = np.zeros((ar.size, ar.size))
    companion[0] = ar
    companion[1:, :-1] = np.eye(ar.size - 1)
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0 - margin)


def _prepare(series: AnnualSeries, order: ArimaOrder, detrend: bool, convention: str):
    if len(series) <= order.p + order.q + order.d + 2:
        raise InsufficientDataError(
            f"order {order} needs more than {order.p + order.q + order.d + 2} values, "
            f"got {len(series)}",
            "arima",
        )
    if detrend:
        trend, working = fit_trend(series, convention)
    else:
        trend, working = None, series
    return trend, working, difference(working, order.d)


def fit_css_lm(
    series: AnnualSeries,
    order: ArimaOrder,
    *,
    detrend: bool = True,
    init: Sequence[float] | None = None,
    max_iter: int = 100,
    tol: float = 1e-10,
    date_convention: str = "index",
) -> ArimaFit:
    """Conditional-least-squares fit by Levenberg-Marquardt.

    The damping is multiplied by 0.4 after an accepted step and by 10 after a
    rejected one; steps that leave the stationary AR region count as rejected.
    Convergence means the relative drop in the error sum of squares fell
    below ``tol``. On hitting ``max_iter`` the fit is returned with
    ``converged=False`` and a ConvergenceWarning is issued.
    """
    trend, working, wser = _prepare(series, order, detrend, date_convention)
    w = wser.as_array()
    k = order.n_params
    params = np.full(k, DEFAULT_INIT) if init is None else np.asarray(init, dtype=float)
    if params.shape != (k,):
        raise ArgumentError(f"init must have {k} values", "arima")
    if not ar_is_stationary(params[: order.p]):
        raise ArgumentError("initial AR parameters are not stationary", "arima")

    lam = LAMBDA_INIT
    e, jac = css_jacobian(params, w, order)
    ess = float(e @ e)
    trace = [IterationRecord(0, ess, lam, tuple(params.tolist()))]
    converged = k == 0
    status = "no parameters" if k == 0 else "max_iter reached"
    itn = 0
    while not converged and itn < max_iter:
        grad = jac.T @ e
        hess = jac.T @ jac
        scale = np.maximum(np.diag(hess), 1e-300)
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(hess + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= LAMBDA_REJECT
                continue
            trial = params + step
            if ar_is_stationary(trial[: order.p]):
                # non-invertible MA trials can blow up; they are simply rejected
                with np.errstate(over="ignore", invalid="ignore"):
                    e_new = css_residuals(trial, w, order)
                    ess_new = float(e_new @ e_new)
                if np.isfinite(ess_new) and ess_new <= ess:
                    accepted = True
                    break
            lam *= LAMBDA_REJECT
        if not accepted:
            # no downhill step at any damping: sitting on the minimum
            converged = True
            status = "no further descent"
            break
        itn += 1
        used = lam
        rel = (ess - ess_new) / ess if ess > 0 else 0.0
        params, ess = trial, ess_new
        e, jac = css_jacobian(params, w, order)
        trace.append(IterationRecord(itn, ess, used, tuple(params.tolist())))
        lam = used * LAMBDA_ACCEPT
        if rel < tol:
            converged = True
            status = "normal convergence"

    if not converged:
        warnings.warn(
            f"ARIMA{order} fit did not converge in {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )

    n_obs = len(series)
    n_eff = max(n_obs - order.d - order.p, 1)
    mse = ess / n_eff
    stderr: tuple[float, ...] = ()
    if k:
        try:
            cov = mse * np.linalg.inv(jac.T @ jac)
            stderr = tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(cov))
        except np.linalg.LinAlgError:
            stderr = tuple(math.nan for _ in range(k))
    return ArimaFit(
        order=order,
        ar=tuple(float(v) for v in params[: order.p]),
        ma=tuple(float(v) for v in params[order.p :]),
        rss=ess,
        mse=mse,
        rmse=math.sqrt(mse),
        n_obs=n_obs,
        n_effective=n_eff,
        trace=tuple(trace),
        converged=converged,
        trend=trend,
        working=working,
        residuals=AnnualSeries(wser.start_year, e),
        stderr=stderr,
        status=status,
    )


def prefit(
    order: ArimaOrder,
    ar: Sequence[float],
    ma: Sequence[float],
    rmse: float,
    *,
    n_obs: int = 0,
    rss: float | None = None,
) -> ArimaFit:
    """Fit object from published parameters, without data.

    Good for interval widths (psi-weights and rmse); forecasting means needs
    a fit with data.
    """
    ar = tuple(float(v) for v in ar)
    ma = tuple(float(v) for v in ma)
    if len(ar) != order.p or len(ma) != order.q:
        raise ArgumentError(f"order {order} does not match {len(ar)} AR / {len(ma)} MA values", "arima")
    if not ar_is_stationary(ar):
        raise ArgumentError("AR parameters are not stationary", "arima")
    if rmse < 0 or not math.isfinite(rmse):
        raise ArgumentError("rmse must be finite and nonnegative", "arima")
    n_eff = max(n_obs - order.d - order.p, 1)
    mse = rmse * rmse
    return ArimaFit(
        order=order,
        ar=ar,
        ma=ma,
        rss=mse * n_eff if rss is None else float(rss),
        mse=mse,
        rmse=float(rmse),
        n_obs=n_obs,
        n_effective=n_eff,
        status="prefitted",
    )


def mse_from_rss(rss: float, n_obs: int, order: ArimaOrder) -> float:
    return rss / max(n_obs - order.d - order.p, 1)


def psi_weights(
    order: ArimaOrder, ar: Sequence[float], ma: Sequence[float], h_max: int
) -> np.ndarray:
    """psi_0..psi_h_max of the integrated model."""
    ar = np.asarray(ar, dtype=float)
    ma = np.asarray(ma, dtype=float)
    if len(ar) != order.p or len(ma) != order.q:
        raise ArgumentError("coefficient counts do not match the order", "arima")
    if h_max < 0:
        raise ArgumentError("h_max must be nonnegative", "arima")
    if not ar_is_stationary(ar, margin=0.0):
        raise ArgumentError("psi-weights need a stationary AR part", "arima")
    # generalized AR polynomial (1 - sum ar B^i)(1 - B)^d, as 1 - sum g_i B^i
    poly = np.r_[1.0, -ar]
    for _ in range(order.d):
        poly = np.convolve(poly, [1.0, -1.0])
    g = -poly[1:]
    psi = np.zeros(h_max + 1)
    psi[0] = 1.0
    for j in range(1, h_max + 1):
        acc = -ma[j - 1] if j <= order.q else 0.0
        for i in range(1, min(j, len(g)) + 1):
            acc += g[i - 1] * psi[j - i]
        psi[j] = acc
    return psi


def forecast_se(fit: ArimaFit, steps: Sequence[int], variance_lag_offset: int = 1) -> np.ndarray:
    """Standard error at each forecast step: rmse * sqrt(sum psi_j^2, j < step + offset)."""
    if variance_lag_offset not in (0, 1):
        raise ArgumentError("variance_lag_offset must be 0 or 1", "arima")
    steps = np.asarray(steps, dtype=int)
    if steps.size and steps.min() < 1:
        raise ArgumentError("forecast steps must be positive", "arima")
    top = int(steps.max()) + variance_lag_offset if steps.size else 0
    psi = psi_weights(fit.order, fit.ar, fit.ma, top)
    cum = np.cumsum(psi * psi)
    return fit.rmse * np.sqrt(cum[steps - 1 + variance_lag_offset])


def level_multiplier(level: float, overrides: Mapping[float, float] | None = None) -> float:
    """Two-sided Gaussian quantile for ``level`` unless overridden."""
    if not 0.0 < level < 1.0:
        raise ArgumentError(f"confidence level must lie in (0, 1), got {level}", "arima")
    if overrides and level in overrides:
        return float(overrides[level])
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def make_bands(
    years: Sequence[int],
    horizons: Sequence[int],
    means: Sequence[float],
    ses: Sequence[float],
    levels: Sequence[float],
    multipliers: Mapping[float, float] | None = None,
) -> list[ForecastBand]:
    zs = {lv: level_multiplier(lv, multipliers) for lv in levels}
    bands = []
    for year, h, m, s in zip(years, horizons, means, ses):
        m, s = float(m), float(s)
        bands.append(
            ForecastBand(
                year=int(year),
                horizon=int(h),
                mean=m,
                se=s,
                intervals={lv: (m - z * s, m + z * s) for lv, z in zs.items()},
            )
        )
    return bands


def extend_paths(fit: ArimaFit, steps: int, innovations: np.ndarray) -> np.ndarray:
    """Run the fitted recursion forward from the end of the data.

    ``innovations`` has shape (n_paths, steps); zeros give the point
    forecast. Returns values on the original scale (trend added back).
    """
    if fit.working is None or fit.residuals is None:
        raise ArgumentError("fit carries no data to extend", "arima")
    innovations = np.atleast_2d(np.asarray(innovations, dtype=float))
    n_paths = innovations.shape[0]
    if innovations.shape[1] != steps:
        raise ArgumentError("innovation matrix does not match the step count", "arima")
    p, d, q = fit.order.p, fit.order.d, fit.order.q
    x_hist = fit.working.as_array()
    w_hist = np.diff(x_hist, n=d) if d else x_hist
    e_hist = fit.residuals.as_array()
    ar = np.asarray(fit.ar)
    ma = np.asarray(fit.ma)

    lag = max(p, q, d, 1)
    w = np.zeros((n_paths, lag + steps))
    e = np.zeros((n_paths, lag + steps))
    x = np.zeros((n_paths, lag + steps))
    # presample outside the data is zero, matching the CSS convention
    tw, te, tx = w_hist[-lag:], e_hist[-lag:], x_hist[-lag:]
    w[:, lag - len(tw) : lag] = tw
    e[:, lag - len(te) : lag] = te
    x[:, lag - len(tx) : lag] = tx
    binom = [math.comb(d, k) * (-1) ** (k + 1) for k in range(1, d + 1)]
    for s in range(steps):
        t = lag + s
        val = innovations[:, s].copy()
        for i in range(p):
            val += ar[i] * w[:, t - 1 - i]
        for j in range(q):
            val -= ma[j] * e[:, t - 1 - j]
        w[:, t] = val
        e[:, t] = innovations[:, s]
        xt = val.copy()
        for k, c in enumerate(binom, start=1):
            xt += c * x[:, t - k]
        x[:, t] = xt
    out = x[:, lag:]
    if fit.trend is not None:
        years = fit.working.end_year + np.arange(1, steps + 1)
        out = out + np.array([fit.trend(yr) for yr in years])
    return out


def forecast(
    fit: ArimaFit,
    origin_year: int,
    horizons: Sequence[int],
    levels: Sequence[float] = (0.95,),
    variance_lag_offset: int = 1,
    *,
    multipliers: Mapping[float, float] | None = None,
    allow_unconverged: bool = False,
) -> list[ForecastBand]:
    """Point forecasts and Gaussian bands for years ``origin_year + h``.

    Steps are counted from the last observed year of the fit, so an origin
    earlier than the end of the data simply shortens the steps.
    """
    if not fit.converged and not allow_unconverged:
        raise NumericalError(f"fit {fit.order} did not converge ({fit.status})", "arima")
    horizons = [int(h) for h in horizons]
    if any(h <= 0 for h in horizons):
        raise ArgumentError("forecast horizons must be positive", "arima")
    years = [origin_year + h for h in horizons]
    steps = [y - fit.last_year for y in years]
    if any(s <= 0 for s in steps):
        raise ArgumentError(
            f"forecast years must follow the last observed year {fit.last_year}", "arima"
        )
    if not horizons:
        return []
    n = max(steps)
    means = extend_paths(fit, n, np.zeros((1, n)))[0]
    ses = forecast_se(fit, steps, variance_lag_offset)
    return make_bands(years, horizons, [means[s - 1] for s in steps], ses, levels, multipliers)


def pseudo_r2(fit: ArimaFit, original: AnnualSeries) -> float:
    y = original.as_array()
    tss = float(((y - y.mean()) ** 2).sum())
    if tss <= 0.0:
        raise DegenerateSeriesError("original series has zero variance", "arima")
    return 100.0 * (1.0 - fit.rss / tss)


def diagnose(
    fit: ArimaFit,
    residuals: AnnualSeries | None = None,
    max_lag: int = 1,
    alpha: float = 0.05,
) -> DiagnosticsReport:
    """Residual whiteness check.

    Adequate means the Ljung-Box p-value over ``max_lag`` lags exceeds
    ``alpha`` and no residual autocorrelation up to ``max_lag`` leaves the
    2/sqrt(n) band.
    """
    res = residuals if residuals is not None else fit.residuals
    if res is None:
        raise ArgumentError("no residuals to diagnose", "arima")
    lag = min(max_lag, len(res) - 1)
    a = acf(res, lag)
    lb, adequate = residual_adequacy(a.correlations, a.n, fit.order.n_params, lag, alpha)
    return DiagnosticsReport(acf=a, ljung_box=lb, adequate=adequate)


def residual_adequacy(
    correlations: Sequence[float],
    n: int,
    fitted_params: int,
    max_lag: int,
    alpha: float = 0.05,
    band_multiplier: float = 2.0,
) -> tuple[LjungBoxResult, bool]:
    """The adequacy rule applied to already computed residual autocorrelations."""
    lb = ljung_box(correlations, n, max_lag, fitted_params)
    band = band_multiplier / math.sqrt(n)
    inside = all(abs(r) <= band for r in correlations[:max_lag])
    return lb, lb.p_value > alpha and inside


@dataclass(frozen=True)
class CandidateStatus:
    order: ArimaOrder
    status: str
    p_value: float = math.nan
    adequate: bool = False


def select_d(series: AnnualSeries, max_d: int = 2, adf_lags: int = 2) -> int | None:
    """Smallest d whose differenced series rejects a unit root, or None."""
    for d in range(max_d + 1):
        if len(series) <= d:
            break
        s = difference(series, d)
        try:
            _, reject = adf_test(s, adf_lags)
        except PopfanError:
            return None
        if reject:
            return d
    return None


def candidate_orders(max_p: int, max_q: int, ds: Sequence[int]) -> list[ArimaOrder]:
    cands = [ArimaOrder(p, d, q) for d in ds for p in range(max_p + 1) for q in range(max_q + 1)]
    return sorted(cands, key=lambda o: (o.d, o.p + o.q, o.p))


def model_search(
    series: AnnualSeries,
    max_p: int = 2,
    max_d: int = 2,
    max_q: int = 2,
    alpha: float = 0.05,
    *,
    detrend: bool = False,
    max_lag: int = 1,
    adf_lags: int = 2,
    date_convention: str = "index",
) -> tuple[ArimaOrder, ArimaFit]:
    """Smallest adequate ARIMA order.

    d comes first, as the least differencing at which the ADF test rejects a
    unit root; if it never does, every d in the grid is tried. Candidates are
    then tried in ascending (d, p+q, p) order and the first adequate one is
    returned. With no adequate candidate the best Ljung-Box p-value wins and
    a warning is issued.
    """
    base = fit_trend(series, date_convention)[1] if detrend else series
    d_star = select_d(base, max_d, adf_lags)
    ds = [d_star] if d_star is not None else list(range(max_d + 1))
    statuses: list[CandidateStatus] = []
    best: tuple[float, ArimaOrder, ArimaFit] | None = None
    for order in candidate_orders(max_p, max_q, ds):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                fit = fit_css_lm(series, order, detrend=detrend, date_convention=date_convention)
            if not fit.converged:
                statuses.append(CandidateStatus(order, "not converged"))
                continue
            diag = diagnose(fit, max_lag=max_lag, alpha=alpha)
        except PopfanError as exc:
            statuses.append(CandidateStatus(order, f"failed: {exc}"))
            continue
        statuses.append(CandidateStatus(order, "fitted", diag.ljung_box.p_value, diag.adequate))
        logger.debug("candidate %s p=%.4g adequate=%s", order, diag.ljung_box.p_value, diag.adequate)
        if diag.adequate:
            return order, fit
        if best is None or diag.ljung_box.p_value > best[0]:
            best = (diag.ljung_box.p_value, order, fit)
    if best is None:
        listing = "; ".join(f"{s.order}: {s.status}" for s in statuses)
        raise SearchFailureError(f"no candidate order could be fitted ({listing})", "arima")
    warnings.warn(
        f"no adequate order found; using {best[1]} with Ljung-Box p={best[0]:.4g}",
        UserWarning,
        stacklevel=2,
    )
    return best[1], best[2]
