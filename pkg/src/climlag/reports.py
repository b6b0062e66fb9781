"""CSV writers and matching readers for per-stage outputs.

Floats are written with the shortest round-trip representation, so every
file reads back to the exact values that produced it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core_data import MonthIndex, format_float
from .errors import SchemaError

STL_HEADER = ("month", "observed", "trend", "seasonal", "remainder")
CORRELATION_HEADER = ("variable", "lag", "r")
BEST_LAG_HEADER = ("variable", "best_lag", "r")
DIAGNOSTICS_HEADER = ("lag", "acf", "pacf")
COEFFICIENT_HEADER = ("term", "estimate_standardized", "estimate_raw")
IMPORTANCE_HEADER = ("feature", "total_gain")


def write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_rows(path, header) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(header):
            raise SchemaError(f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        return list(reader)


# STL ---------------------------------------------------------------------------

def write_stl_csv(path, months, comp) -> None:
    write_rows(path, STL_HEADER, (
        (str(m), float(o), float(t), float(s), float(r))
        for m, o, t, s, r in zip(months, comp.observed, comp.trend, comp.seasonal, comp.remainder)
    ))


def read_stl_csv(path):
    rows = read_rows(path, STL_HEADER)
    months = [MonthIndex.parse(r["month"]) for r in rows]
    return months, {k: np.array([float(r[k]) for r in rows]) for k in STL_HEADER[1:]}


# correlation -------------------------------------------------------------------

def write_correlation_csv(path, matrix) -> None:
    write_rows(path, CORRELATION_HEADER, (
        (v, lag, float(matrix.r[i, j]))
        for i, v in enumerate(matrix.variables) for j, lag in enumerate(matrix.lags)
    ))


def read_correlation_csv(path) -> list[tuple[str, int, float]]:
    return [(r["variable"], int(r["lag"]), float(r["r"])) for r in read_rows(path, CORRELATION_HEADER)]


def write_best_lags_csv(path, best) -> None:
    write_rows(path, BEST_LAG_HEADER, ((b.variable, b.lag, float(b.r)) for b in best))


def read_best_lags_csv(path) -> list[tuple[str, int, float]]:
    return [(r["variable"], int(r["best_lag"]), float(r["r"])) for r in read_rows(path, BEST_LAG_HEADER)]


# diagnostics -------------------------------------------------------------------

def write_diagnostics_csv(path, acf_values, pacf_values) -> None:
    """Both sequences start at lag 0 (value 1 by convention)."""
    if len(acf_values) != len(pacf_values):
        raise ValueError("acf and pacf must cover the same lags")
    write_rows(path, DIAGNOSTICS_HEADER, ((k, float(a), float(p)) for k, (a, p) in enumerate(zip(acf_values, pacf_values))))


def read_diagnostics_csv(path):
    rows = read_rows(path, DIAGNOSTICS_HEADER)
    return (np.array([int(r["lag"]) for r in rows]), np.array([float(r["acf"]) for r in rows]),
            np.array([float(r["pacf"]) for r in rows]))


# model artifacts ---------------------------------------------------------------

def write_coefficients_csv(path, fit) -> None:
    write_rows(path, COEFFICIENT_HEADER, ((t, float(s), float(r)) for t, s, r in fit.coefficient_rows()))


def read_coefficients_csv(path) -> list[tuple[str, float, float]]:
    return [(r["term"], float(r["estimate_standardized"]), float(r["estimate_raw"]))
            for r in read_rows(path, COEFFICIENT_HEADER)]


def write_importance_csv(path, columns, gains) -> None:
    write_rows(path, IMPORTANCE_HEADER, ((c, float(g)) for c, g in zip(columns, gains)))


def read_importance_csv(path) -> list[tuple[str, float]]:
    return [(r["feature"], float(r["total_gain"])) for r in read_rows(path, IMPORTANCE_HEADER)]
