"""Deterministic synthetic division data.

A monsoon-shaped climate cycle drives a Poisson case series through fixed
month lags (rain/sunshine at 2, humidity at 1, temperature at 3), so every
stage of the pipeline can be exercised without network access.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core_data import (
    CLIMATE_COLUMNS,
    AlignedPanel,
    CaseSeries,
    ClimateTable,
    MonthIndex,
    month_range,
    write_cases_csv,
    write_climate_csv,
)

START = MonthIndex(2022, 1)
N_MONTHS = 46


def synthetic_panel(division: str = "Synthetic", n_months: int = N_MONTHS, seed: int = 0,
                    start: MonthIndex = START, scale: float = 1.0) -> AlignedPanel:
    rng = np.random.default_rng(seed)
    months = month_range(start, n_months)
    # phase 0 in January; monsoon peak around July
    angle = 2 * np.pi * (np.array([m.month for m in months]) - 1) / 12
    wet = np.clip(-np.cos(angle) + 0.15 * rng.standard_normal(n_months), -1.2, 1.2)
    days = np.array([m.days for m in months], dtype=float)

    temp = 26 - 5 * np.cos(angle - 0.5) + 0.6 * rng.standard_normal(n_months)
    rainy = np.clip(np.round(11 + 10 * wet + rng.normal(0, 1.5, n_months)), 0, days)
    rain = np.clip(150 + 140 * wet + rng.normal(0, 25, n_months), 0, None)
    sun_h = np.clip(210 - 120 * wet + rng.normal(0, 15, n_months), 0, None)
    sun_d = np.clip(np.round(22 - 8 * wet + rng.normal(0, 1.2, n_months)), 0, days)
    hum = np.clip(65 + 18 * wet + rng.normal(0, 2.5, n_months), 0, 100)

    def lagged(x, k):
        return np.concatenate([np.full(k, x[:12].mean()), x[:-k]]) if k else x

    z = lambda x: (x - x.mean()) / x.std()
    eta = (
        np.log(400 * scale)
        + 0.9 * z(lagged(rainy, 2))
        + 0.6 * z(lagged(hum, 1))
        - 0.5 * z(lagged(sun_h, 2))
        + 0.2 * z(lagged(temp, 3))
        + np.linspace(0, 0.4, n_months)
    )
    cases = rng.poisson(np.exp(eta))
    climate = {
        "temp_avg": np.round(temp, 2),
        "rainy_days": rainy,
        "rainfall_mm": np.round(rain, 1),
        "sun_hours": np.round(sun_h, 1),
        "sun_days": sun_d,
        "humidity": np.round(hum, 1),
    }
    return AlignedPanel(division, months, cases, climate)


def write_fixture(directory, divisions=("Dhaka", "Barishal"), seed: int = 0,
                  n_months: int = N_MONTHS) -> list[Path]:
    """Write ``<division>_cases.csv`` and ``<division>_climate.csv`` for each division."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for k, div in enumerate(divisions):
        panel = synthetic_panel(div, n_months=n_months, seed=seed + 101 * k, scale=4.0 if k == 0 else 1.0)
        cases_path = directory / f"{div}_cases.csv"
        climate_path = directory / f"{div}_climate.csv"
        write_cases_csv(CaseSeries(panel.months, panel.cases), cases_path)
        write_climate_csv(ClimateTable(panel.months, {c: panel.climate[c] for c in CLIMATE_COLUMNS}), climate_path)
        written += [cases_path, climate_path]
    return written
