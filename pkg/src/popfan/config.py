"""Run configuration: flat ``key = value`` files with ``#`` comments.

Unknown keys are rejected. Prefitted parameters (``prefit.*``) switch the
pipeline into bypass mode, where published coefficients and forecast means
stand in for a fit on raw data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from popfan.arima import DATE_CONVENTIONS, ArimaOrder
from popfan.errors import ConfigError, FileIOError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Prefit:
    ar: tuple[float, ...]
    ma: tuple[float, ...]
    rmse: float
    means: dict[int, float]
    # published (lower, upper) density bounds keyed by (level, year)
    bounds: dict[tuple[float, int], tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    land_area_km2: float
    origin_year: int
    target_years: tuple[int, ...]
    levels: tuple[float, ...] = (0.95, 0.66)
    order: ArimaOrder | None = None  # None means automatic search
    variance_lag_offset: int = 1
    detrend: bool = True
    date_convention: str = "index"
    seed: int = 0
    rounding: str = "nearest"
    max_iter: int = 100
    tol: float = 1e-10
    diag_max_lag: int = 1
    alpha: float = 0.05
    allow_unconverged: bool = False
    density_decimals: int | None = None
    multipliers: dict[float, float] = field(default_factory=dict)
    prefit: Prefit | None = None
    reference_half_widths: dict[tuple[float, int], float] = field(default_factory=dict)
    validate: bool = False
    validate_paths: int = 20_000
    validate_horizon: int = 30
    series_csv: str | None = None
    points_csv: str | None = None

    def __post_init__(self):
        if not self.land_area_km2 > 0:
            raise ConfigError("land_area_km2 must be positive")
        if not self.target_years:
            raise ConfigError("target_years must not be empty")
        bad = [y for y in self.target_years if y <= self.origin_year]
        if bad:
            raise ConfigError(
                f"target years {', '.join(map(str, bad))} do not follow origin_year {self.origin_year}"
            )
        if len(set(self.target_years)) != len(self.target_years):
            raise ConfigError("target_years contains duplicates")
        if not self.levels or any(not 0.0 < lv < 1.0 for lv in self.levels):
            raise ConfigError("levels must lie strictly between 0 and 1")
        if len(set(self.levels)) != len(self.levels):
            raise ConfigError("levels must be distinct")
        if self.variance_lag_offset not in (0, 1):
            raise ConfigError("variance_lag_offset must be 0 or 1")
        if self.date_convention not in DATE_CONVENTIONS:
            raise ConfigError(f"date_convention must be one of {', '.join(DATE_CONVENTIONS)}")
        if self.rounding != "nearest":
            raise ConfigError("rounding supports only 'nearest'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.diag_max_lag < 1 or self.max_iter < 1 or self.validate_paths < 1 or self.validate_horizon < 1:
            raise ConfigError("diag_max_lag, max_iter, validate_paths and validate_horizon must be positive")
        for lv in self.multipliers:
            if lv not in self.levels:
                raise ConfigError(f"multiplier given for level {lv:g}, which is not in levels")
        if self.prefit is not None:
            if self.order is None:
                raise ConfigError("prefit parameters need an explicit order")
            if len(self.prefit.ar) != self.order.p or len(self.prefit.ma) != self.order.q:
                raise ConfigError(f"prefit coefficients do not match order {self.order}")
            missing = [y for y in self.target_years if y not in self.prefit.means]
            if missing:
                raise ConfigError(f"prefit.mean missing for {', '.join(map(str, missing))}")
            for (lv, year), (lo, hi) in self.prefit.bounds.items():
                if lv not in self.levels or year not in self.target_years:
                    raise ConfigError(f"prefit.bounds given for level {lv:g}, year {year} outside the run")
                if not lo <= self.prefit.means[year] <= hi:
                    raise ConfigError(f"prefit.bounds for {lv:g}/{year} do not bracket the mean")

    @property
    def bypass(self) -> bool:
        return self.prefit is not None

    @property
    def horizons(self) -> list[int]:
        return [y - self.origin_year for y in self.target_years]

    def echo(self) -> dict:
        """Plain-data view for provenance blocks."""
        out = {
            "land_area_km2": self.land_area_km2,
            "origin_year": self.origin_year,
            "target_years": list(self.target_years),
            "levels": list(self.levels),
            "order": "auto" if self.order is None else str(self.order),
            "variance_lag_offset": self.variance_lag_offset,
            "detrend": self.detrend,
            "date_convention": self.date_convention,
            "seed": self.seed,
            "rounding": self.rounding,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "diag_max_lag": self.diag_max_lag,
            "alpha": self.alpha,
            "density_decimals": self.density_decimals,
            "multipliers": {f"{k:g}": v for k, v in self.multipliers.items()},
        }
        if self.prefit is not None:
            out["prefit"] = {
                "ar": list(self.prefit.ar),
                "ma": list(self.prefit.ma),
                "rmse": self.prefit.rmse,
                "means": {str(k): v for k, v in sorted(self.prefit.means.items())},
                "bounds": {f"{lv:g}/{yr}": list(b) for (lv, yr), b in sorted(self.prefit.bounds.items())},
            }
        return out


def _bool(key, v):
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def _floats(key, v):
    if not v.strip():
        return ()
    try:
        return tuple(float(x) for x in v.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {v!r}") from None


def _ints(key, v):
    try:
        return tuple(int(x) for x in v.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {v!r}") from None


def _num(key, v, kind=float):
    try:
        return kind(v)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {v!r}") from None


def parse_order(text: str) -> ArimaOrder | None:
    text = text.strip().strip("()")
    if text.lower() == "auto":
        return None
    parts = _ints("order", text)
    if len(parts) != 3:
        raise ConfigError("order must be 'auto' or p,d,q")
    try:
        return ArimaOrder(*parts)
    except Exception as exc:
        raise ConfigError(f"order: {exc}") from None


_SCALARS = {
    "land_area_km2": lambda k, v: _num(k, v),
    "origin_year": lambda k, v: _num(k, v, int),
    "target_years": _ints,
    "levels": _floats,
    "order": lambda k, v: parse_order(v),
    "variance_lag_offset": lambda k, v: _num(k, v, int),
    "detrend": _bool,
    "date_convention": lambda k, v: v,
    "seed": lambda k, v: _num(k, v, int) & _MASK64,
    "rounding": lambda k, v: v,
    "max_iter": lambda k, v: _num(k, v, int),
    "tol": lambda k, v: _num(k, v),
    "diag_max_lag": lambda k, v: _num(k, v, int),
    "alpha": lambda k, v: _num(k, v),
    "allow_unconverged": _bool,
    "density_decimals": lambda k, v: None if v.lower() == "none" else _num(k, v, int),
    "validate": _bool,
    "validate_paths": lambda k, v: _num(k, v, int),
    "validate_horizon": lambda k, v: _num(k, v, int),
    "series_csv": lambda k, v: v,
    "points_csv": lambda k, v: v,
}
_REQUIRED = ("land_area_km2", "origin_year", "target_years")


def parse_config(text: str, base_dir: str | Path | None = None) -> PipelineConfig:
    values: dict = {}
    multipliers: dict[float, float] = {}
    references: dict[tuple[float, int], float] = {}
    prefit: dict = {"means": {}, "bounds": {}}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen.add(key)
        if key in _SCALARS:
            values[key] = _SCALARS[key](key, value)
        elif key.startswith("multiplier."):
            multipliers[_num(key, key[len("multiplier."):])] = _num(key, value)
        elif key.startswith("reference."):
            level, _, year = key[len("reference."):].rpartition(".")
            references[(_num(key, level), _num(key, year, int))] = _num(key, value)
        elif key in ("prefit.ar", "prefit.ma"):
            prefit[key[7:]] = _floats(key, value)
        elif key == "prefit.rmse":
            prefit["rmse"] = _num(key, value)
        elif key.startswith("prefit.bounds."):
            level, _, year = key[len("prefit.bounds."):].rpartition(".")
            pair = _floats(key, value)
            if len(pair) != 2:
                raise ConfigError(f"{key}: expected lower, upper")
            prefit["bounds"][(_num(key, level), _num(key, year, int))] = pair
        elif key.startswith("prefit.mean."):
            prefit["means"][_num(key, key[len("prefit.mean."):], int)] = _num(key, value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    if base_dir is not None:
        for k in ("series_csv", "points_csv"):
            if k in values and not Path(values[k]).is_absolute():
                values[k] = str(Path(base_dir) / values[k])
    pf = None
    if len(prefit) > 2 or prefit["means"] or prefit["bounds"]:
        if "rmse" not in prefit:
            raise ConfigError("prefit parameters need prefit.rmse")
        pf = Prefit(
            ar=prefit.get("ar", ()),
            ma=prefit.get("ma", ()),
            rmse=prefit["rmse"],
            means=prefit["means"],
            bounds=prefit["bounds"],
        )
    return PipelineConfig(
        **values,
        multipliers=multipliers,
        reference_half_widths=references,
        prefit=pf,
    )


def load_config(path: str | Path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileIOError(f"cannot read config {path}: {exc}", "config") from exc
    return parse_config(text, Path(path).parent)
