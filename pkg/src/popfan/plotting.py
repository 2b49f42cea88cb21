"""Raster fan chart rendered with matplotlib, written next to the SVG."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from popfan.arima import ForecastBand  # noqa: E402
from popfan.bridge import DensitySeries  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
COLORS = ("#c6dbef", "#6baed6", "#2171b5", "#08519c")


def plot_fanchart(
    history: DensitySeries | None,
    bands: Sequence[ForecastBand],
    path: str | Path,
    title: str = "Density forecast",
    dpi: int = 150,
) -> Path:
    bands = sorted(bands, key=lambda b: b.year)
    levels = sorted({lv for b in bands for lv in b.intervals}, reverse=True)
    years = [b.year for b in bands]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        for i, level in enumerate(levels):
            ax.fill_between(
                years,
                [b.intervals[level][0] for b in bands],
                [b.intervals[level][1] for b in bands],
                color=COLORS[min(i, len(COLORS) - 1)],
                label=f"{level * 100:g}% interval",
                linewidth=0,
            )
        if history is not None:
            ax.plot(history.series.years, history.series.values, color="black", lw=1.2, label="observed")
        ax.plot(years, [b.mean for b in bands], "--", color="#d62728", lw=1.2, marker="o", ms=3, label="forecast")
        ax.set_xlabel("year")
        ax.set_ylabel("persons per km$^2$")
        ax.set_title(title)
        ax.legend(frameon=False, loc="best")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=dpi, metadata={"Software": None})
        plt.close(fig)
    return path
