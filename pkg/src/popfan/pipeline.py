"""End-to-end run: fit, forecast, translate, validate, write outputs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from popfan import __version__
from popfan.arima import (
    ArimaFit,
    DiagnosticsReport,
    ForecastBand,
    diagnose,
    fit_css_lm,
    forecast,
    forecast_se,
    level_multiplier,
    make_bands,
    model_search,
    prefit,
    pseudo_r2,
)
from popfan.bridge import DensitySeries, ReportTables, build_report
from popfan.config import PipelineConfig
from popfan.data import load_points_csv, load_series_csv
from popfan.errors import ConfigError, FileIOError, NumericalError
from popfan.series import AcfResult, acf
from popfan.superpop import CoverageResult, coverage_check, simulate_paths
from popfan.svg import emit_fanchart_svg

logger = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "table_id", "year", "level", "point", "lower", "upper",
    "mean_density", "se", "r_lower", "r_upper",
)
REPORT_ACF_LAGS = 24


@dataclass
class RunReport:
    config: PipelineConfig
    tables: ReportTables | None = None
    fit: ArimaFit | None = None
    bands: list[ForecastBand] = field(default_factory=list)
    history: DensitySeries | None = None
    diagnostics: DiagnosticsReport | None = None
    residual_acf: AcfResult | None = None
    pseudo_r2: float | None = None
    coverage: dict[tuple[float, int], CoverageResult] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    outputs: list[Path] = field(default_factory=list)


def translated_table_ids(levels) -> dict[float, str]:
    """First level maps to 1.D; further levels to 1.F, 1.G, ..."""
    ids = {}
    for i, level in enumerate(levels):
        ids[level] = "1.D" if i == 0 else f"1.{chr(ord('F') + i - 1)}"
    return ids


def _g(v: float) -> str:
    return f"{v:.9g}"


def _digest(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise FileIOError(f"cannot read {path}: {exc}", "pipeline") from exc


class Pipeline:
    """Stages share one RunReport; each CLI subcommand runs a prefix of them."""

    def __init__(self, config: PipelineConfig, series_path=None, points_path=None):
        self.config = config
        self.series_path = series_path or config.series_csv
        self.points_path = points_path or config.points_csv
        self.report = RunReport(config=config)
        inputs = {}
        for name, p in (("series", self.series_path), ("points", self.points_path)):
            if p is not None:
                inputs[name] = {"path": Path(p).name, "sha256": _digest(p)}
        self.report.provenance = {
            "toolkit": f"popfan {__version__}",
            "inputs": inputs,
            "config": config.echo(),
        }

    def _warn(self, msg: str) -> None:
        logger.warning(msg)
        self.report.warnings.append(msg)

    def load_history(self) -> DensitySeries | None:
        if self.series_path is None:
            if not self.config.bypass:
                raise ConfigError("a series CSV is required unless prefit parameters are given")
            return None
        hist = load_series_csv(self.series_path, self.config.land_area_km2)
        if hist.series.end_year < self.config.origin_year:
            self._warn(
                f"series ends in {hist.series.end_year}, before origin year "
                f"{self.config.origin_year}; it does not cover the projection base"
            )
        self.report.history = hist
        return hist

    def fit(self) -> ArimaFit:
        cfg = self.config
        hist = self.load_history()
        if cfg.bypass:
            fit = prefit(cfg.order, cfg.prefit.ar, cfg.prefit.ma, cfg.prefit.rmse)
            self.report.fit = fit
            return fit
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if cfg.order is None:
                _, fit = model_search(
                    hist.series,
                    alpha=cfg.alpha,
                    detrend=cfg.detrend,
                    max_lag=cfg.diag_max_lag,
                    date_convention=cfg.date_convention,
                )
            else:
                fit = fit_css_lm(
                    hist.series,
                    cfg.order,
                    detrend=cfg.detrend,
                    max_iter=cfg.max_iter,
                    tol=cfg.tol,
                    date_convention=cfg.date_convention,
                )
        for w in caught:
            self._warn(str(w.message))
        if not fit.converged and not cfg.allow_unconverged:
            raise NumericalError(f"ARIMA{fit.order} fit did not converge ({fit.status})", "arima")
        self.report.fit = fit
        self.report.diagnostics = diagnose(fit, max_lag=cfg.diag_max_lag, alpha=cfg.alpha)
        res = fit.residuals
        self.report.residual_acf = acf(res, min(REPORT_ACF_LAGS, len(res) - 1))
        self.report.pseudo_r2 = pseudo_r2(fit, hist.series)
        return fit

    def forecast(self) -> list[ForecastBand]:
        cfg = self.config
        fit = self.report.fit or self.fit()
        if cfg.bypass:
            years = list(cfg.target_years)
            ses = forecast_se(fit, cfg.horizons, cfg.variance_lag_offset)
            bands = make_bands(
                years, cfg.horizons, [cfg.prefit.means[y] for y in years], ses, cfg.levels, cfg.multipliers
            )
            if cfg.prefit.bounds:
                bands = self._published_bounds(bands)
        else:
            bands = forecast(
                fit,
                cfg.origin_year,
                cfg.horizons,
                cfg.levels,
                cfg.variance_lag_offset,
                multipliers=cfg.multipliers,
                allow_unconverged=cfg.allow_unconverged,
            )
        self.report.bands = bands
        return bands

    def _published_bounds(self, bands: list[ForecastBand]) -> list[ForecastBand]:
        out = []
        for b in bands:
            intervals = dict(b.intervals)
            for lv in intervals:
                given = self.config.prefit.bounds.get((lv, b.year))
                if given is None:
                    continue
                lo, hi = intervals[lv]
                dev = max(abs(given[0] - lo), abs(given[1] - hi))
                self.report.notes.append(
                    f"{lv * 100:g}% density bounds for {b.year} taken as published "
                    f"({given[0]:g}, {given[1]:g}); computed ({lo:.6f}, {hi:.6f}), "
                    f"largest difference {dev:.2g}"
                )
                intervals[lv] = tuple(given)
            out.append(ForecastBand(b.year, b.horizon, b.mean, b.se, intervals))
        return out

    def translate(self) -> ReportTables:
        if self.points_path is None:
            raise ConfigError("a point-forecast CSV is required for translation")
        bands = self.report.bands or self.forecast()
        points = load_points_csv(self.points_path)
        tables = build_report(points, bands, self.config.levels, density_decimals=self.config.density_decimals)
        self.report.tables = tables
        return tables

    def validate(self) -> dict[tuple[float, int], CoverageResult]:
        cfg = self.config
        if cfg.bypass:
            raise ConfigError("validation needs a fit on data; prefit parameters carry none")
        fit = self.report.fit or self.fit()
        origin = fit.last_year
        horizons = list(range(1, cfg.validate_horizon + 1))
        ens = simulate_paths(fit, origin, cfg.validate_horizon, cfg.validate_paths, cfg.seed)
        results = {}
        for offset in sorted({0, cfg.variance_lag_offset}):
            bands = forecast(fit, origin, horizons, cfg.levels, offset, allow_unconverged=True)
            for level in cfg.levels:
                results[(level, offset)] = coverage_check(ens, bands, level)
        self.report.coverage = results
        return results


# --- writers ---------------------------------------------------------------


def tables_csv(tables: ReportTables) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    ids = translated_table_ids(tables.levels)

    def row(**kw):
        writer.writerow([kw.get(c, "") for c in TABLE_COLUMNS])

    for year, point in tables.points.items():
        row(table_id="1.A", year=year, point=_g(point))
    for b in tables.density_bands:
        for level in tables.levels:
            lo, hi = b.intervals[level]
            row(table_id="1.B", year=b.year, level=f"{level:g}", lower=_g(lo), upper=_g(hi),
                mean_density=_g(b.mean), se=_g(b.se))
    bands = {b.year: b for b in tables.density_bands}
    for w in tables.widths:
        row(table_id="1.C", year=w.year, level=f"{w.level:g}", mean_density=_g(bands[w.year].mean),
            r_lower=_g(w.r_lower), r_upper=_g(w.r_upper))
    for level in tables.levels:
        for tb in tables.translated[level]:
            w = tables.widths_for(tb.year, level)
            row(table_id=ids[level], year=tb.year, level=f"{level:g}", point=_g(tb.point),
                lower=tb.lower, upper=tb.upper, mean_density=_g(bands[tb.year].mean),
                r_lower=_g(w.r_lower), r_upper=_g(w.r_upper))
    return buf.getvalue()


def _md_table(header, rows) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def fit_summary(report: RunReport) -> dict:
    fit = report.fit
    out = {
        "order": [fit.order.p, fit.order.d, fit.order.q],
        "ar": list(fit.ar),
        "ma": list(fit.ma),
        "stderr": list(fit.stderr),
        "rss": fit.rss,
        "mse": fit.mse,
        "rmse": fit.rmse,
        "n_obs": fit.n_obs,
        "n_effective": fit.n_effective,
        "converged": fit.converged,
        "status": fit.status,
        "trend": None,
        "pseudo_r2": report.pseudo_r2,
        "trace": [
            {"itn": r.itn, "ess": r.ess, "lambda": r.lam, "params": list(r.params)} for r in fit.trace
        ],
    }
    if fit.trend is not None:
        out["trend"] = {
            "intercept": fit.trend.intercept,
            "slope": fit.trend.slope,
            "date_convention": fit.trend.date_convention,
        }
    if report.diagnostics is not None:
        d = report.diagnostics
        out["diagnostics"] = {
            "band": d.acf.band,
            "acf": list(d.acf.correlations),
            "ljung_box": {"q": d.ljung_box.q_stat, "df": d.ljung_box.df, "p": d.ljung_box.p_value},
            "adequate": d.adequate,
        }
    if report.residual_acf is not None:
        out["residual_acf"] = list(report.residual_acf.correlations)
    return out


def fit_json(report: RunReport) -> str:
    payload = {"fit": fit_summary(report), "provenance": report.provenance, "warnings": report.warnings}
    if report.coverage:
        payload["coverage"] = [
            {"level": lv, "variance_lag_offset": off, "coverage": list(c.coverage), "n_paths": c.n_paths}
            for (lv, off), c in sorted(report.coverage.items())
        ]
    return json.dumps(payload, indent=2) + "\n"


def report_markdown(report: RunReport) -> str:
    cfg = report.config
    fit = report.fit
    tables = report.tables
    lines = ["# Probabilistic population forecast", ""]

    lines += ["## Model", ""]
    lines.append(f"- ARIMA order: {fit.order}")
    for i, (v, name) in enumerate(zip(fit.params, [f"AR({i + 1})" for i in range(fit.order.p)]
                                      + [f"MA({j + 1})" for j in range(fit.order.q)])):
        if i < len(fit.stderr) and fit.stderr[i] > 0:
            se = fit.stderr[i]
            lines.append(f"- {name}: {v:.7g} (standard error {se:.7g}, t {v / se:.6g})")
        else:
            lines.append(f"- {name}: {v:.7g}")
    if fit.trend is not None:
        lines.append(f"- trend: ({fit.trend.intercept:.7g}) + ({fit.trend.slope:.7g}) x date "
                     f"[{fit.trend.date_convention} dates]")
    if fit.status != "prefitted":
        lines.append(f"- observations: {fit.n_obs}; iterations: {len(fit.trace) - 1}; {fit.status}")
        lines.append(f"- residual sum of squares: {fit.rss:.7g}")
    lines.append(f"- mean square error: {fit.mse:.7g}")
    lines.append(f"- root mean square: {fit.rmse:.7g}")
    if report.pseudo_r2 is not None:
        lines.append(f"- pseudo R-squared: {report.pseudo_r2:.6f}")
    lines.append(f"- variance lag offset: {cfg.variance_lag_offset}")
    lines.append("")

    if len(fit.trace) > 1:
        lines += ["### Minimization trace", ""]
        lines += _md_table(
            ["itn", "error sum of squares", "lambda", "parameters"],
            [[r.itn, f"{r.ess:.7g}", f"{r.lam:.4g}", ", ".join(f"{p:.7g}" for p in r.params)] for r in fit.trace],
        )
        lines.append("")

    if report.diagnostics is not None:
        d = report.diagnostics
        lines += ["## Diagnostics", ""]
        lines.append(f"- Ljung-Box Q = {d.ljung_box.q_stat:.4f}, df = {d.ljung_box.df}, "
                     f"p = {d.ljung_box.p_value:.4g} over {d.acf.max_lag} lag(s)")
        lines.append(f"- significance band: |r| > {d.acf.band:.6f}")
        lines.append(f"- adequate: {'yes' if d.adequate else 'no'}")
        if report.residual_acf is not None:
            sig = report.residual_acf.significant_lags()
            lines.append(f"- residual lags outside the band (of {report.residual_acf.max_lag}): "
                         f"{', '.join(map(str, sig)) if sig else 'none'}")
        lines.append("")

    if tables is not None:
        years = list(tables.points)
        lines += ["## Table 1.A: population point forecast", ""]
        lines += _md_table(["year"] + [str(y) for y in years], [["forecast"] + [f"{tables.points[y]:,.0f}" for y in years]])
        lines.append("")
        lines += ["## Table 1.B: density forecast (absolute)", ""]
        rows = []
        for b in tables.density_bands:
            for lv in tables.levels:
                lo, hi = b.intervals[lv]
                rows.append([b.year, f"{lv:g}", f"{b.mean:.4f}", f"{lo:.4f}", f"{hi:.4f}", f"{b.se:.6f}"])
        lines += _md_table(["year", "level", "forecast", "lower", "upper", "se"], rows)
        lines.append("")
        lines += ["## Table 1.C: density forecast (relative)", ""]
        lines += _md_table(
            ["year", "level", "r_lower", "r_upper"],
            [[w.year, f"{w.level:g}", f"{w.r_lower:.9f}", f"{w.r_upper:.9f}"] for w in tables.widths],
        )
        lines.append("")
        ids = translated_table_ids(tables.levels)
        for lv in tables.levels:
            lines += [f"## Table {ids[lv]}: population forecast with {lv * 100:g}% intervals", ""]
            lines += _md_table(
                ["year", "forecast", "lower", "upper", "half-width"],
                [[t.year, f"{t.point:,.0f}", f"{t.lower:,}", f"{t.upper:,}", f"{t.half_width:,.1f}"]
                 for t in tables.translated[lv]],
            )
            lines.append("")

    notes = report.notes + _interval_notes(report)
    if notes or report.warnings:
        lines += ["## Notes", ""]
        lines += [f"- {n}" for n in notes + report.warnings]
        lines.append("")

    if report.coverage:
        lines += ["## Simulation coverage", ""]
        rows = []
        for (lv, off), c in sorted(report.coverage.items()):
            rows.append([f"{lv:g}", off, f"{min(c.coverage):.4f}", f"{max(c.coverage):.4f}", c.n_paths])
        lines += _md_table(["level", "offset", "min coverage", "max coverage", "paths"], rows)
        lines.append("")

    lines += ["## Provenance", "", "```json", json.dumps(report.provenance, indent=2), "```", ""]
    return "\n".join(lines)


def _interval_notes(report: RunReport) -> list[str]:
    cfg = report.config
    notes = []
    if 0.95 in cfg.levels:
        z95 = level_multiplier(0.95, cfg.multipliers)
        for lv in cfg.levels:
            if lv == 0.95:
                continue
            z = level_multiplier(lv, cfg.multipliers)
            notes.append(
                f"{lv * 100:g}% bounds use multiplier {z:.6f} ({z / z95:.4f} of the 95% multiplier {z95:.6f})"
            )
    if report.tables is not None and cfg.reference_half_widths:
        by_level = report.tables.translated
        for (lv, year), ref in sorted(cfg.reference_half_widths.items()):
            match = [t for t in by_level.get(lv, []) if t.year == year]
            if not match:
                continue
            hw = match[0].half_width
            notes.append(
                f"open question: {lv * 100:g}% half-width for {year} is {hw:,.1f} against the "
                f"reference {ref:,.0f} ({(hw - ref) / ref * 100:+.2f}%); the reference bounds "
                "are not reproducible with a Gaussian multiplier"
            )
    return notes


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise FileIOError(f"cannot write {path}: {exc}", "pipeline") from exc
    return path


def write_outputs(report: RunReport, out_dir: str | Path, *, charts: bool = True, png: bool = True) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FileIOError(f"cannot create {out}: {exc}", "pipeline") from exc
    written = []
    if report.fit is not None:
        written.append(_write(out / "fit.json", fit_json(report)))
    if report.tables is not None:
        written.append(_write(out / "tables.csv", tables_csv(report.tables)))
        written.append(_write(out / "report.md", report_markdown(report)))
    elif report.bands:
        written.append(_write(out / "forecast.csv", bands_csv(report.bands)))
    if report.bands and charts:
        written.append(emit_fanchart_svg(report.history, report.bands, out / "fanchart.svg"))
        if png:
            from popfan.plotting import plot_fanchart

            written.append(plot_fanchart(report.history, report.bands, out / "fanchart.png"))
    if report.coverage:
        written.append(_write(out / "coverage.csv", coverage_csv(report)))
    report.outputs = written
    return written


def bands_csv(bands) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "horizon", "level", "mean", "se", "lower", "upper"])
    for b in bands:
        for lv, (lo, hi) in b.intervals.items():
            w.writerow([b.year, b.horizon, f"{lv:g}", _g(b.mean), _g(b.se), _g(lo), _g(hi)])
    return buf.getvalue()


def coverage_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "variance_lag_offset", "horizon", "coverage", "n_paths"])
    for (lv, off), c in sorted(report.coverage.items()):
        for h, frac in enumerate(c.coverage, start=1):
            w.writerow([f"{lv:g}", off, h, _g(frac), c.n_paths])
    return buf.getvalue()


def run_pipeline(
    config: PipelineConfig,
    series_path=None,
    points_path=None,
    out_dir=".",
    *,
    validate: bool | None = None,
    png: bool = True,
) -> RunReport:
    """Every stage, then all outputs written into ``out_dir``."""
    pipe = Pipeline(config, series_path, points_path)
    pipe.fit()
    pipe.forecast()
    pipe.translate()
    if config.validate if validate is None else validate:
        pipe.validate()
    write_outputs(pipe.report, out_dir, png=png)
    return pipe.report
