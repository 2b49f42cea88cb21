from pathlib import Path

import numpy as np
import pytest
from scipy import signal

from popfan.arima import ArimaOrder, fit_css_lm
from popfan.series import AnnualSeries

ROOT = Path(__file__).resolve().parents[1]
ESTONIA_DIR = ROOT / "fixtures" / "estonia"

# acceptance results, printed one line per criterion at the end of the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def simulate_arima110(seed, n, phi=0.8, sigma=1.0, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + burn) * sigma
    w = signal.lfilter([1.0], [1.0, -phi], e)[burn:]
    return np.cumsum(w)


def estonia_like_density(seed=9, n=74):
    """Density-scale series: a gentle line plus ARIMA(1,1,0) wiggle, 1950 onward."""
    x = simulate_arima110(seed, n, phi=0.96, sigma=0.09)
    t = np.arange(1, n + 1)
    return AnnualSeries(1950, 30.8 + 0.024 * t + x)


@pytest.fixture(scope="session")
def estonia_like_fit():
    return fit_css_lm(estonia_like_density(), ArimaOrder(1, 1, 0))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
