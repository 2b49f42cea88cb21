"""Regenerate the synthetic ARIMA(1,1,0) population fixture.

Density follows 40 + an integrated AR(1) with phi 0.8 and innovation sd 0.05,
1874-2023, over a land area of 1000 km2; populations are rounded to persons.
"""

from pathlib import Path

import numpy as np
from scipy import signal

SEED, N, PHI, SIGMA, BURN = 2, 150, 0.8, 0.05, 200
AREA = 1000.0

here = Path(__file__).parent
rng = np.random.default_rng(SEED)
e = rng.standard_normal(N + BURN) * SIGMA
density = 40 + np.cumsum(signal.lfilter([1.0], [1.0, -PHI], e)[BURN:])
with open(here / "population.csv", "w", newline="\n") as f:
    f.write("year,population\n")
    for i, d in enumerate(density):
        f.write(f"{1874 + i},{round(d * AREA)}\n")
with open(here / "points.csv", "w", newline="\n") as f:
    f.write("year,forecast\n2030,36900\n2040,37300\n2050,37600\n")
