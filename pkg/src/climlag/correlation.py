"""Lagged Pearson screening of climate variables against case counts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_data import CLIMATE_COLUMNS, AlignedPanel
from .errors import ConstantSeries, InsufficientLength, LengthMismatch


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch(f"series lengths differ: {x.shape} vs {y.shape}")
    if len(x) < 3:
        raise LengthMismatch("pearson needs at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx <= 0.0 or syy <= 0.0:
        raise ConstantSeries("pearson: zero-variance series")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


@dataclass(frozen=True)
class LagCorrelationMatrix:
    variables: tuple[str, ...]
    lags: tuple[int, ...]
    r: np.ndarray  # shape (len(variables), len(lags))
    n_eff: np.ndarray  # per lag

    def cell(self, variable: str, lag: int) -> float:
        return float(self.r[self.variables.index(variable), self.lags.index(lag)])


@dataclass(frozen=True)
class BestLag:
    variable: str
    lag: int
    r: float


def lagged_matrix(panel: AlignedPanel, max_lag: int = 4, variables=CLIMATE_COLUMNS) -> LagCorrelationMatrix:
    """Correlate ``climate[t - L]`` with ``cases[t]`` over the maximal overlap, L = 0..max_lag."""
    n = len(panel)
    if n <= max_lag + 3:
        raise InsufficientLength(f"need more than {max_lag + 3} months for lags up to {max_lag}")
    cases = panel.cases.astype(float)
    lags = tuple(range(max_lag + 1))
    r = np.empty((len(variables), len(lags)))
    for i, v in enumerate(variables):
        x = panel.climate[v]
        for L in lags:
            r[i, L] = pearson(x[:n - L], cases[L:])
    return LagCorrelationMatrix(tuple(variables), lags, r, np.array([n - L for L in lags]))


def best_lags(matrix: LagCorrelationMatrix) -> list[BestLag]:
    """Per-variable lag of maximal |r|; equal magnitudes go to the smaller lag."""
    out = []
    for i, v in enumerate(matrix.variables):
        mags = np.abs(matrix.r[i])
        k = int(np.argmax(mags))  # first occurrence = smallest lag
        out.append(BestLag(v, matrix.lags[k], float(matrix.r[i, k])))
    return out
