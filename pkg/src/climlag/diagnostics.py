"""Autocorrelation, partial autocorrelation, Ljung-Box and information criteria."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import ConstantSeries, NumericalSingularity, SeriesTooShort


@dataclass(frozen=True)
class AcfResult:
    values: np.ndarray
    n: int


@dataclass(frozen=True)
class LjungBoxResult:
    Q: float
    h: int
    dof: int
    p: float


def _centered(y, max_lag):
    y = np.asarray(y, dtype=float)
    if len(y) <= max_lag + 1:
        raise SeriesTooShort(f"need more than {max_lag + 1} points for {max_lag} lags")
    d = y - y.mean()
    denom = np.dot(d, d)
    if denom <= 1e-300 or np.ptp(y) == 0.0:
        raise ConstantSeries("autocorrelation of a constant series is undefined")
    return d, denom


def acf(y, max_lag: int) -> AcfResult:
    """Sample autocorrelation with the biased (1/n) convention."""
    d, denom = _centered(y, max_lag)
    n = len(d)
    vals = np.array([np.dot(d[:n - k], d[k:]) / denom for k in range(max_lag + 1)])
    vals[0] = 1.0
    return AcfResult(vals, n)


def pacf_from_acf(rho) -> np.ndarray:
    """Durbin-Levinson recursion; element k is the lag-k partial autocorrelation."""
    rho = np.asarray(rho, dtype=float)
    max_lag = len(rho) - 1
    out = np.zeros(max_lag + 1)
    out[0] = 1.0
    if max_lag == 0:
        return out
    phi = np.zeros(max_lag + 1)
    phi[1] = rho[1]
    out[1] = rho[1]
    v = 1.0 - rho[1] ** 2
    for k in range(2, max_lag + 1):
        if v <= 1e-12:
            raise NumericalSingularity(f"Durbin-Levinson breakdown at lag {k}")
        a = (rho[k] - np.dot(phi[1:k], rho[k - 1:0:-1])) / v
        new = phi.copy()
        new[1:k] = phi[1:k] - a * phi[k - 1:0:-1]
        new[k] = a
        phi = new
        out[k] = a
        v *= 1.0 - a * a
    return out


def pacf(y, max_lag: int) -> np.ndarray:
    return pacf_from_acf(acf(y, max_lag).values)


def chi2_sf(q: float, dof: int) -> float:
    if q <= 0:
        return 1.0
    return float(gammaincc(dof / 2.0, q / 2.0))


def ljung_box(residuals, h: int = 12, fitted_params: int = 0) -> LjungBoxResult:
    r = acf(residuals, h).values
    n = len(np.asarray(residuals))
    k = np.arange(1, h + 1)
    Q = float(n * (n + 2) * np.sum(r[1:] ** 2 / (n - k)))
    dof = max(1, h - fitted_params)
    return LjungBoxResult(Q, h, dof, chi2_sf(Q, dof))


def aic_bic(loglik: float, k: int, n: int) -> tuple[float, float]:
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    return 2 * k - 2 * loglik, k * math.log(n) - 2 * loglik
