"""Forecast error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch


@dataclass(frozen=True)
class MetricTriple:
    rmse: float
    mae: float
    mape_pct: float | None
    mape_excluded: int = 0

    def as_row(self):
        return self.rmse, self.mae, self.mape_pct


def metrics(observed, predicted) -> MetricTriple:
    """RMSE, MAE and MAPE (percent, over months with nonzero observed value).

    MAPE is None when every observed value is zero; ``mape_excluded`` counts
    the zero months left out of it.
    """
    y = np.asarray(observed, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"observed {y.shape} vs predicted {yhat.shape}")
    if y.size == 0:
        raise LengthMismatch("metrics need at least one point")
    err = y - yhat
    rmse = math.sqrt(float(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    pos = y > 0
    mape = float(100.0 * np.mean(np.abs(err[pos]) / y[pos])) if pos.any() else None
    return MetricTriple(rmse, mae, mape, int(np.count_nonzero(~pos)))
