import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from conftest import simulate_arima110
from popfan.arima import (
    ArimaOrder,
    ConvergenceWarning,
    css_jacobian,
    css_objective,
    diagnose,
    fit_css_lm,
    fit_trend,
    forecast,
    forecast_se,
    model_search,
    mse_from_rss,
    prefit,
    psi_weights,
    pseudo_r2,
    residual_adequacy,
)
from popfan.errors import ArgumentError, DegenerateSeriesError, InsufficientDataError, NumericalError
from popfan.series import AnnualSeries

PHI = 0.9614962
RMSE = 0.08916587
# residual autocorrelations as printed for the Estonia model, lags 1..48
PUBLISHED_RESIDUAL_ACF = [
    0.400167, -0.075988, -0.016163, -0.024545, -0.142687, -0.141474, -0.075700, -0.085602,
    -0.043228, -0.011662, -0.040070, 0.002167, 0.090163, 0.025157, -0.128197, -0.114217,
    0.033592, 0.055798, 0.055508, 0.101835, 0.010672, -0.130101, -0.169485, -0.054299,
    0.063520, 0.077727, 0.028183, -0.072754, -0.084807, -0.010600, -0.038922, -0.081575,
    -0.035905, -0.007455, -0.021691, -0.030857, 0.086111, 0.149888, 0.157346, -0.009002,
    -0.146874, -0.043296, -0.023557, 0.000727, 0.023018, 0.025295, 0.017776, 0.007455,
]


class TestOrder:
    def test_str_and_params(self):
        o = ArimaOrder(1, 1, 2)
        assert str(o) == "(1,1,2)"
        assert o.n_params == 3

    @pytest.mark.parametrize("args", [(-1, 0, 0), (0, 3, 0), (1.5, 0, 0)])
    def test_invalid(self, args):
        with pytest.raises(ArgumentError):
            ArimaOrder(*args)


class TestTrend:
    def test_exact_line(self):
        s = AnnualSeries(1950, [5 + 2 * i for i in range(1, 11)])
        trend, resid = fit_trend(s)
        assert trend.intercept == pytest.approx(5)
        assert trend.slope == pytest.approx(2)
        np.testing.assert_allclose(resid.values, 0, atol=1e-12)

    def test_hand_ols(self):
        trend, resid = fit_trend(AnnualSeries(2000, [1, 2, 4]))
        assert trend.slope == pytest.approx(1.5)
        assert trend.intercept == pytest.approx(-2 / 3)
        assert sum(resid.values) == pytest.approx(0, abs=1e-12)

    def test_index_date_convention(self):
        trend, _ = fit_trend(AnnualSeries(1950, [1, 2, 4]))
        assert trend.date(1950) == 1
        assert trend(1952) == pytest.approx(-2 / 3 + 1.5 * 3)

    def test_calendar_convention_same_line(self):
        s = AnnualSeries(1950, [3.0, 1.0, 4.0, 1.0, 5.0])
        a, ra = fit_trend(s, "index")
        b, rb = fit_trend(s, "calendar")
        assert a.slope == pytest.approx(b.slope)
        assert a(1970) == pytest.approx(b(1970))
        np.testing.assert_allclose(ra.values, rb.values, atol=1e-9)

    @given(st.floats(-50, 50), st.floats(-5, 5), st.integers(1900, 2000), st.integers(1, 40))
    def test_slope_reproduced_between_dates(self, a, b, y1, gap):
        trend, _ = fit_trend(AnnualSeries(1950, [a, a + b, a + 3 * b, a - b]))
        y2 = y1 + gap
        assert (trend(y2) - trend(y1)) / gap == pytest.approx(trend.slope, abs=1e-9)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            fit_trend(AnnualSeries(2000, [1.0, 2.0]))

    @settings(max_examples=30)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=50))
    def test_residuals_sum_to_zero(self, values):
        _, resid = fit_trend(AnnualSeries(0, values))
        scale = max(1.0, max(abs(v) for v in values))
        assert abs(sum(resid.values)) <= 1e-9 * scale * len(values)


class TestCss:
    def test_no_parameters(self):
        w = [0.5, -1.0, 2.0]
        assert css_objective([], w, ArimaOrder(0, 0, 0)) == pytest.approx(5.25)

    def test_two_step_recursion(self):
        assert css_objective([1.0], [1.0, 1.0], ArimaOrder(1, 0, 0)) == pytest.approx(1.0)

    def test_ma_recursion_by_hand(self):
        # e1 = w1 = 1; e2 = w2 + 0.5 e1 = 2.5; e3 = w3 + 0.5 e2 = 1.25
        ess = css_objective([0.5], [1.0, 2.0, 0.0], ArimaOrder(0, 0, 1))
        assert ess == pytest.approx(1 + 2.5**2 + 1.25**2)

    def test_wrong_param_count(self):
        with pytest.raises(ArgumentError):
            css_objective([0.1, 0.2], [1.0, 2.0], ArimaOrder(1, 0, 0))

    @pytest.mark.parametrize("order", [ArimaOrder(1, 0, 0), ArimaOrder(0, 0, 1), ArimaOrder(2, 0, 1)])
    def test_jacobian_matches_finite_differences(self, order):
        rng = np.random.default_rng(17)
        w = rng.standard_normal(120)
        for _ in range(5):
            params = rng.uniform(-0.6, 0.6, order.n_params)
            _, jac = css_jacobian(params, w, order)
            for k in range(order.n_params):
                h = np.zeros_like(params)
                h[k] = 1e-6
                from popfan.arima import css_residuals

                fd = (css_residuals(params + h, w, order) - css_residuals(params - h, w, order)) / 2e-6
                np.testing.assert_allclose(jac[:, k], fd, rtol=1e-5, atol=1e-7)


class TestFit:
    def test_white_noise_no_parameters(self):
        x = np.random.default_rng(0).standard_normal(60)
        fit = fit_css_lm(AnnualSeries(0, x), ArimaOrder(0, 0, 0), detrend=False)
        assert fit.converged
        assert fit.rss == pytest.approx(float(x @ x))
        assert fit.ar == () and fit.ma == ()

    def test_recovers_ar(self):
        y = simulate_arima110(99, 5000)
        fit = fit_css_lm(AnnualSeries(0, y), ArimaOrder(1, 1, 0), detrend=False)
        assert fit.converged
        assert 0.78 <= fit.ar[0] <= 0.82
        assert fit.stderr[0] == pytest.approx(math.sqrt((1 - 0.8**2) / 5000), rel=0.15)

    def test_default_start(self):
        fit = fit_css_lm(AnnualSeries(0, simulate_arima110(1, 200)), ArimaOrder(1, 1, 0))
        first = fit.trace[0]
        assert first.itn == 0 and first.lam == 0.1 and first.params == (0.1,)

    def test_trace_never_increases(self):
        fit = fit_css_lm(AnnualSeries(0, simulate_arima110(2, 300)), ArimaOrder(1, 1, 1))
        ess = [r.ess for r in fit.trace]
        assert all(b <= a * (1 + 1e-10) for a, b in zip(ess, ess[1:]))
        assert all(r.lam > 0 and r.ess >= 0 for r in fit.trace)

    def test_lambda_schedule(self):
        fit = fit_css_lm(AnnualSeries(0, simulate_arima110(3, 400)), ArimaOrder(1, 1, 0))
        lams = [r.lam for r in fit.trace[1:]]
        # every damping value is 0.1 scaled by powers of 0.4 and 10
        for lam in lams:
            k = math.log(lam / 0.1)
            found = any(
                abs(a * math.log(0.4) + b * math.log(10) - k) < 1e-9
                for a in range(0, 60) for b in range(0, 20)
            )
            assert found

    def test_mse_convention(self):
        fit = fit_css_lm(AnnualSeries(1950, simulate_arima110(4, 74)), ArimaOrder(1, 1, 0))
        assert fit.n_effective == 72
        assert fit.mse == pytest.approx(fit.rss / 72)
        assert fit.rmse == pytest.approx(math.sqrt(fit.mse))

    def test_stays_stationary(self):
        # a pure random walk pushes the AR estimate toward 1 after differencing once too few
        y = np.cumsum(np.cumsum(np.random.default_rng(5).standard_normal(300)))
        fit = fit_css_lm(AnnualSeries(0, y), ArimaOrder(1, 0, 0), detrend=False)
        assert abs(fit.ar[0]) < 1 - 1e-6

    def test_not_converged_warns(self):
        with pytest.warns(ConvergenceWarning):
            fit = fit_css_lm(AnnualSeries(0, simulate_arima110(6, 200)), ArimaOrder(1, 1, 1), max_iter=1, tol=1e-300)
        assert not fit.converged
        with pytest.raises(NumericalError):
            forecast(fit, fit.last_year, [1])
        forecast(fit, fit.last_year, [1], allow_unconverged=True)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            fit_css_lm(AnnualSeries(0, [1.0, 2.0, 3.0, 4.0]), ArimaOrder(1, 1, 0))

    def test_affine_rescaling(self):
        y = simulate_arima110(8, 300) + 0.05 * np.arange(300)
        a, b = 3.7, -120.0
        f1 = fit_css_lm(AnnualSeries(1900, y), ArimaOrder(1, 1, 0))
        f2 = fit_css_lm(AnnualSeries(1900, a * y + b), ArimaOrder(1, 1, 0))
        assert f2.ar[0] == pytest.approx(f1.ar[0], abs=1e-7)
        assert f2.rss == pytest.approx(a * a * f1.rss, rel=1e-6)
        b1 = forecast(f1, 2199, [5, 10], (0.95,))
        b2 = forecast(f2, 2199, [5, 10], (0.95,))
        for x1, x2 in zip(b1, b2):
            assert x2.mean == pytest.approx(a * x1.mean + b, rel=1e-7)
            lo1, hi1 = x1.intervals[0.95]
            lo2, hi2 = x2.intervals[0.95]
            assert hi2 - x2.mean == pytest.approx(a * (hi1 - x1.mean), rel=1e-6)


class TestPsi:
    def test_white_noise(self):
        np.testing.assert_array_equal(psi_weights(ArimaOrder(0, 0, 0), [], [], 5), [1, 0, 0, 0, 0, 0])

    def test_first_step(self):
        psi = psi_weights(ArimaOrder(1, 1, 0), [PHI], [], 3)
        assert psi[1] == pytest.approx(1.9614962, abs=1e-12)

    def test_closed_form(self):
        for phi in np.random.default_rng(0).uniform(-0.99, 0.99, 10):
            psi = psi_weights(ArimaOrder(1, 1, 0), [phi], [], 50)
            closed = [(1 - phi ** (j + 1)) / (1 - phi) for j in range(51)]
            np.testing.assert_allclose(psi, closed, rtol=0, atol=1e-10)

    def test_ma1(self):
        psi = psi_weights(ArimaOrder(0, 0, 1), [], [0.4], 3)
        np.testing.assert_allclose(psi, [1, -0.4, 0, 0])

    def test_matches_impulse_response(self):
        # psi-weights are the impulse response of theta(B) / (phi(B)(1-B)^d)
        ar, ma = [0.5, -0.2], [0.3]
        den = np.convolve(np.r_[1.0, -np.array(ar)], [1.0, -1.0])
        impulse = np.zeros(20)
        impulse[0] = 1.0
        expected = signal.lfilter(np.r_[1.0, -np.array(ma)], den, impulse)
        np.testing.assert_allclose(psi_weights(ArimaOrder(2, 1, 1), ar, ma, 19), expected, atol=1e-12)

    def test_nonstationary_rejected(self):
        with pytest.raises(ArgumentError):
            psi_weights(ArimaOrder(1, 0, 0), [1.2], [], 5)


class TestForecast:
    def published(self):
        return prefit(ArimaOrder(1, 1, 0), [PHI], [], RMSE)

    @pytest.mark.parametrize("h, half", [(7, 2.2554), (17, 6.3438), (27, 10.7160)])
    def test_published_half_widths(self, h, half):
        se = forecast_se(self.published(), [h], 1)[0]
        assert 1.959964 * se == pytest.approx(half, rel=1e-3)

    def test_cross_check_h7(self):
        se = forecast_se(self.published(), [7], 1)[0]
        psi = [(1 - PHI ** (j + 1)) / (1 - PHI) for j in range(8)]
        assert sum(p * p for p in psi) == pytest.approx(166.54, abs=0.01)
        assert se == pytest.approx(RMSE * math.sqrt(sum(p * p for p in psi)))

    def test_offset_zero_is_one_step_earlier(self):
        fit = self.published()
        np.testing.assert_allclose(forecast_se(fit, [8], 0), forecast_se(fit, [7], 1))

    def test_se_strictly_increasing(self):
        se = forecast_se(self.published(), list(range(1, 40)), 0)
        assert np.all(np.diff(se) > 0)

    def test_bands_symmetric_and_nested(self, estonia_like_fit):
        bands = forecast(estonia_like_fit, 2023, list(range(1, 31)), (0.66, 0.95, 0.99))
        for b in bands:
            for lv, (lo, hi) in b.intervals.items():
                assert lo <= b.mean <= hi
                assert hi - b.mean == pytest.approx(b.mean - lo, rel=1e-9)
            assert b.lower(0.95) < b.lower(0.66) and b.upper(0.66) < b.upper(0.95)
            assert b.lower(0.99) < b.lower(0.95)

    def test_quantiles(self):
        from popfan.arima import level_multiplier

        assert level_multiplier(0.95) == pytest.approx(1.959964, abs=1e-6)
        assert level_multiplier(0.66) == pytest.approx(0.954165, abs=1e-6)
        assert level_multiplier(0.66, {0.66: 1.0}) == 1.0

    def test_years_and_means(self, estonia_like_fit):
        bands = forecast(estonia_like_fit, 2023, [1, 7], (0.95,))
        assert [b.year for b in bands] == [2024, 2030]
        assert [b.horizon for b in bands] == [1, 7]

    def test_mean_by_hand_ar1_d1(self):
        # detrend off: x_{T+1} = x_T + phi (x_T - x_{T-1})
        y = simulate_arima110(12, 100)
        fit = fit_css_lm(AnnualSeries(0, y), ArimaOrder(1, 1, 0), detrend=False)
        phi = fit.ar[0]
        b1, b2 = forecast(fit, fit.last_year, [1, 2], (0.95,))
        d1 = phi * (y[-1] - y[-2])
        assert b1.mean == pytest.approx(y[-1] + d1)
        assert b2.mean == pytest.approx(y[-1] + d1 + phi * d1)

    def test_mean_adds_trend(self):
        y = 10 + 0.5 * np.arange(1, 41) + np.random.default_rng(4).standard_normal(40) * 0.1
        fit = fit_css_lm(AnnualSeries(1980, y), ArimaOrder(0, 0, 0))
        (b,) = forecast(fit, 2019, [5], (0.95,))
        assert b.mean == pytest.approx(fit.trend(2024))

    def test_bad_horizon(self, estonia_like_fit):
        with pytest.raises(ArgumentError):
            forecast(estonia_like_fit, 2023, [0])
        with pytest.raises(ArgumentError):
            forecast(estonia_like_fit, 2010, [3])


class TestPseudoR2:
    def series_with_tss(self, tss):
        a = math.sqrt(tss / 2)
        return AnnualSeries(0, [-a, a])

    def test_extremes(self):
        s = self.series_with_tss(10.0)
        assert pseudo_r2(prefit(ArimaOrder(0, 0, 0), [], [], 1.0, rss=0.0), s) == 100
        assert pseudo_r2(prefit(ArimaOrder(0, 0, 0), [], [], 1.0, rss=10.0), s) == pytest.approx(0)

    def test_published_inversion(self):
        # TSS back-solved from the printed pseudo R-squared of 99.915050
        fit = prefit(ArimaOrder(1, 1, 0), [PHI], [], RMSE, rss=0.5724397)
        assert pseudo_r2(fit, self.series_with_tss(673.866)) == pytest.approx(99.9151, abs=5e-5)

    def test_degenerate(self):
        with pytest.raises(DegenerateSeriesError):
            pseudo_r2(prefit(ArimaOrder(0, 0, 0), [], [], 1.0), AnnualSeries(0, [3.0, 3.0]))


def test_mse_from_published_rss():
    # the printed rss carries 7 digits; any rss rounding to it must land on the printed mse
    order = ArimaOrder(1, 1, 0)
    lo = mse_from_rss(0.57243965, 74, order)
    hi = mse_from_rss(0.57243975, 74, order)
    assert lo <= 0.007950552 <= hi
    assert mse_from_rss(0.5724397, 74, order) == pytest.approx(0.007950552, abs=1e-9)
    assert math.sqrt(mse_from_rss(0.5724397, 74, order)) == pytest.approx(0.08916587, abs=1e-8)


class TestDiagnose:
    def test_white_noise_mostly_adequate(self):
        ok = 0
        for seed in range(100):
            x = np.random.default_rng(seed).standard_normal(1000)
            fit = fit_css_lm(AnnualSeries(0, x), ArimaOrder(0, 0, 0), detrend=False)
            ok += diagnose(fit, alpha=0.05).adequate
        assert ok >= 90

    def test_colored_noise_inadequate(self):
        e = np.random.default_rng(1).standard_normal(1100)
        x = signal.lfilter([1.0], [1.0, -0.5], e)[100:]
        fit = fit_css_lm(AnnualSeries(0, x), ArimaOrder(0, 0, 0), detrend=False)
        report = diagnose(fit)
        assert not report.adequate
        assert 1 in report.significant_lags

    def test_published_residual_table_inadequate(self):
        lb, adequate = residual_adequacy(PUBLISHED_RESIDUAL_ACF, 74, 1, max_lag=48)
        assert not adequate
        _, adequate1 = residual_adequacy(PUBLISHED_RESIDUAL_ACF, 74, 1, max_lag=1)
        assert not adequate1
        assert 0.400167 > 2 / math.sqrt(74)


class TestModelSearch:
    def test_arima110_selected(self):
        hits = 0
        for seed in range(20):
            order, _ = model_search(AnnualSeries(0, simulate_arima110(500 + seed, 2000)))
            hits += order == ArimaOrder(1, 1, 0)
        assert hits >= 16

    def test_white_noise(self):
        hits = 0
        for seed in range(15):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                order, _ = model_search(AnnualSeries(0, np.random.default_rng(seed).standard_normal(300)))
            hits += order == ArimaOrder(0, 0, 0)
        assert hits > 7

    def test_trending_line_needs_differencing(self):
        t = np.arange(80.0)
        y = 3 + 0.5 * t + 1e-4 * np.random.default_rng(0).standard_normal(80)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            order, _ = model_search(AnnualSeries(1950, y))
        assert order.d >= 1

    def test_ordering(self):
        from popfan.arima import candidate_orders

        cands = candidate_orders(2, 2, [1])
        keys = [(o.d, o.p + o.q, o.p) for o in cands]
        assert keys == sorted(keys)
        assert cands[0] == ArimaOrder(0, 1, 0)
        assert len(cands) == 9
