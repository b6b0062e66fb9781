"""Additive seasonal-trend decomposition with LOESS (STL).

The smoother follows the classic Fortran STL conventions: a nearest-neighbour
window truncated at the series ends, tricube distance weights that vanish at
the farthest neighbour, and a local linear fit that falls back to a local
mean when the weighted spread of the abscissae is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadWindow, SeriesTooShort


@dataclass(frozen=True)
class LoessConfig:
    seasonal_window: int = 13
    trend_window: int = 23
    inner_iterations: int = 2
    robust_iterations: int = 1
    local_degree: int = 1

    def __post_init__(self):
        if self.seasonal_window < 7 or self.seasonal_window % 2 == 0:
            raise BadWindow(f"seasonal_window must be odd and >= 7, got {self.seasonal_window}")
        if self.trend_window < 3 or self.trend_window % 2 == 0:
            raise BadWindow(f"trend_window must be odd and >= 3, got {self.trend_window}")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if self.robust_iterations < 0:
            raise ValueError("robust_iterations must be >= 0")
        if self.local_degree not in (0, 1):
            raise ValueError("local_degree must be 0 or 1")


@dataclass(frozen=True)
class StlComponents:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: int = 12
    weights: np.ndarray | None = None


def _local_fit(y, rw, xs, nleft, nright, window, degree):
    """Weighted local polynomial value at abscissa ``xs`` from ``y[nleft:nright+1]``.

    Returns None when every weight in the window is zero.
    """
    n = len(y)
    h = max(xs - nleft, nright - xs)
    if window > n:
        h += (window - n) // 2
    j = np.arange(nleft, nright + 1, dtype=float)
    r = np.abs(j - xs)
    w = np.zeros_like(j)
    if h > 0:
        inside = r <= 0.999 * h
        w[inside] = (1.0 - (r[inside] / h) ** 3) ** 3
        w[r <= 0.001 * h] = 1.0
    else:
        w[r == 0] = 1.0
    if rw is not None:
        w *= rw[nleft:nright + 1]
    total = w.sum()
    if total <= 0.0:
        return None
    w /= total
    if degree == 1 and h > 0:
        centre = np.dot(w, j)
        spread = np.dot(w, (j - centre) ** 2)
        if np.sqrt(spread) > 0.001 * (n - 1):
            w = w * ((xs - centre) / spread * (j - centre) + 1.0)
    return float(np.dot(w, y[nleft:nright + 1]))


def _window_bounds(i, n, window):
    if window >= n:
        return 0, n - 1
    half = (window - 1) // 2
    lo = min(max(i - half, 0), n - window)
    return lo, lo + window - 1


def _smooth(y, window, degree, rw=None):
    n = len(y)
    out = np.empty(n)
    for i in range(n):
        lo, hi = _window_bounds(i, n, window)
        value = _local_fit(y, rw, float(i), lo, hi, window, degree)
        out[i] = y[i] if value is None else value
    return out


def loess_smooth(y, window: int, degree: int = 1, weights=None) -> np.ndarray:
    """LOESS fit of ``y`` evaluated at each of its own points.

    Parameters
    ----------
    y : array_like
        Equally spaced series, length >= 2.
    window : int
        Odd number of nearest neighbours in each local fit (>= 3).
    degree : {0, 1}
        Local constant or local linear fit.
    weights : array_like, optional
        Nonnegative robustness weights multiplied into the tricube weights.
    """
    y = np.asarray(y, dtype=float)
    if window < 3 or window % 2 == 0:
        raise BadWindow(f"LOESS window must be odd and >= 3, got {window}")
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    if len(y) < 2:
        raise SeriesTooShort("LOESS needs at least 2 points")
    rw = None
    if weights is not None:
        rw = np.asarray(weights, dtype=float)
        if rw.shape != y.shape or np.any(rw < 0):
            raise ValueError("weights must be nonnegative and match y")
    return _smooth(y, window, degree, rw)


def _moving_average(x, length):
    c = np.cumsum(np.concatenate([[0.0], x]))
    return (c[length:] - c[:-length]) / length


def _cycle_subseries(y, period, window, degree, rw):
    """Smooth each cycle-subseries and extend it one period at both ends."""
    n = len(y)
    out = np.zeros(n + 2 * period)
    for j in range(period):
        idx = np.arange(j, n, period)
        k = len(idx)
        sub = y[idx]
        sub_rw = None if rw is None else rw[idx]
        ext = np.empty(k + 2)
        ext[1:-1] = _smooth(sub, window, degree, sub_rw) if k > 1 else sub
        if k > 1:
            first = _local_fit(sub, sub_rw, -1.0, 0, min(window, k) - 1, window, degree)
            last = _local_fit(sub, sub_rw, float(k), max(0, k - window), k - 1, window, degree)
        else:
            first = last = None
        ext[0] = ext[1] if first is None else first
        ext[-1] = ext[-2] if last is None else last
        out[j:j + period * (k + 2):period] = ext
    return out


def _robustness_weights(resid):
    r = np.abs(resid)
    scale = 6.0 * np.median(r)
    if scale <= 1e-12 * max(1.0, np.max(r)):
        return np.ones_like(r)
    u = r / scale
    w = np.where(u <= 0.999, (1.0 - u**2) ** 2, 0.0)
    w[u <= 0.001] = 1.0
    return w


def stl_decompose(y, period: int = 12, config: LoessConfig | None = None) -> StlComponents:
    """Split ``y`` into trend + seasonal + remainder.

    Each inner pass smooths the cycle-subseries, removes their low-frequency
    part with the period/period/3 moving averages and a LOESS pass, and then
    smooths the deseasonalised series for the trend. Robustness passes
    reweight points by the bisquare of the scaled remainder.
    """
    config = config or LoessConfig()
    y = np.asarray(y, dtype=float)
    n = len(y)
    if period < 2:
        raise ValueError("period must be >= 2")
    if n < 2 * period:
        raise SeriesTooShort(f"STL needs at least {2 * period} points, got {n}")
    if config.trend_window <= period:
        raise BadWindow(f"trend_window must exceed the period ({period})")
    lowpass_window = period + 1 if period % 2 == 0 else period

    trend = np.zeros(n)
    seasonal = np.zeros(n)
    rw = None
    for outer in range(config.robust_iterations + 1):
        for _ in range(config.inner_iterations):
            cycle = _cycle_subseries(y - trend, period, config.seasonal_window, config.local_degree, rw)
            low = _moving_average(_moving_average(_moving_average(cycle, period), period), 3)
            low = _smooth(low, lowpass_window, 1)
            seasonal = cycle[period:period + n] - low
            trend = _smooth(y - seasonal, config.trend_window, 1, rw)
        if outer < config.robust_iterations:
            rw = _robustness_weights(y - seasonal - trend)
    remainder = y - trend - seasonal
    return StlComponents(y.copy(), trend, seasonal, remainder, period, rw)
