"""Monthly panel alignment, lagged design matrices and chronological splits."""

from __future__ import annotations

import calendar
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptyOverlap,
    GapError,
    InsufficientLength,
    SchemaError,
    SplitTooLarge,
)

CLIMATE_COLUMNS = (
    "temp_avg",
    "rainy_days",
    "rainfall_mm",
    "sun_hours",
    "sun_days",
    "humidity",
)
CASES_HEADER = ("month", "cases")
CLIMATE_HEADER = ("month",) + CLIMATE_COLUMNS
PANEL_HEADER = ("month", "cases") + CLIMATE_COLUMNS
CASE_LAG_COLUMN = "cases_lag1"
MAX_LAG = 12


@dataclass(frozen=True, order=True)
class MonthIndex:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "MonthIndex":
        text = text.strip()
        parts = text.split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise SchemaError(f"month must be YYYY-MM, got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError as exc:
            raise SchemaError(f"bad month {text!r}: {exc}") from None

    @property
    def ordinal(self) -> int:
        return self.year * 12 + (self.month - 1)

    @classmethod
    def from_ordinal(cls, k: int) -> "MonthIndex":
        return cls(k // 12, k % 12 + 1)

    def shift(self, k: int) -> "MonthIndex":
        return MonthIndex.from_ordinal(self.ordinal + k)

    def succ(self) -> "MonthIndex":
        return self.shift(1)

    @property
    def days(self) -> int:
        return calendar.monthrange(self.year, self.month)[1]

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(start: MonthIndex, n: int) -> tuple[MonthIndex, ...]:
    return tuple(start.shift(i) for i in range(n))


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_consecutive(months: Sequence[MonthIndex], what: str) -> None:
    for prev, cur in zip(months, months[1:]):
        if cur.ordinal == prev.ordinal:
            raise SchemaError(f"{what}: duplicate month {cur}")
        if cur.ordinal != prev.ordinal + 1:
            raise GapError(f"{what}: gap between {prev} and {cur}")


@dataclass(frozen=True)
class CaseSeries:
    months: tuple[MonthIndex, ...]
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        counts = np.asarray(self.counts)
        if len(counts) != len(self.months):
            raise SchemaError("cases: month and count lengths differ")
        if np.any(counts < 0):
            raise SchemaError("cases: negative count")
        object.__setattr__(self, "counts", _frozen(counts, np.int64))


@dataclass(frozen=True)
class ClimateTable:
    months: tuple[MonthIndex, ...]
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        missing = [c for c in CLIMATE_COLUMNS if c not in self.columns]
        if missing:
            raise SchemaError(f"climate: missing column(s) {', '.join(missing)}")
        cols = {}
        for name in CLIMATE_COLUMNS:
            col = _frozen(self.columns[name])
            if len(col) != len(self.months):
                raise SchemaError(f"climate: column {name} has wrong length")
            if not np.all(np.isfinite(col)):
                raise SchemaError(f"climate: missing or non-finite value in {name}")
            cols[name] = col
        object.__setattr__(self, "columns", cols)


@dataclass(frozen=True)
class AlignedPanel:
    """Gap-free monthly grid of case counts and the six climate columns."""

    division: str
    months: tuple[MonthIndex, ...]
    cases: np.ndarray
    climate: Mapping[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        n = len(self.months)
        _check_consecutive(self.months, f"panel {self.division}")
        cases = np.asarray(self.cases)
        if len(cases) != n:
            raise SchemaError("panel: cases length differs from months")
        if np.any(cases < 0):
            raise SchemaError("panel: negative case count")
        object.__setattr__(self, "cases", _frozen(cases, np.int64))
        cols = {}
        for name in CLIMATE_COLUMNS:
            if name not in self.climate:
                raise SchemaError(f"panel: missing climate column {name}")
            col = _frozen(self.climate[name])
            if len(col) != n:
                raise SchemaError(f"panel: column {name} has wrong length")
            cols[name] = col
        days = np.array([m.days for m in self.months])
        rd = cols["rainy_days"]
        if np.any(rd < 0) or np.any(rd > days):
            raise SchemaError("panel: rainy_days outside [0, days in month]")
        hum = cols["humidity"]
        if np.any(hum < 0) or np.any(hum > 100):
            raise SchemaError("panel: humidity outside [0, 100]")
        object.__setattr__(self, "climate", cols)

    def __len__(self) -> int:
        return len(self.months)

    def column(self, name: str) -> np.ndarray:
        if name == "cases":
            return self.cases.astype(float)
        return self.climate[name]

    def __eq__(self, other):
        if not isinstance(other, AlignedPanel):
            return NotImplemented
        return (
            self.division == other.division
            and self.months == other.months
            and np.array_equal(self.cases, other.cases)
            and all(np.array_equal(self.climate[c], other.climate[c]) for c in CLIMATE_COLUMNS)
        )

    __hash__ = None


@dataclass(frozen=True)
class LagSpec:
    """Month lag applied to each climate variable, plus the optional Y(t-1) column."""

    lags: Mapping[str, int]
    case_lag: bool = False

    def __post_init__(self):
        lags = dict(self.lags)
        for name, lag in lags.items():
            if name not in CLIMATE_COLUMNS:
                raise SchemaError(f"lag given for unknown variable {name!r}")
            if int(lag) != lag or not 0 <= lag <= MAX_LAG:
                raise ValueError(f"lag for {name} must be an integer in 0..{MAX_LAG}")
            lags[name] = int(lag)
        object.__setattr__(self, "lags", lags)

    @classmethod
    def default(cls, case_lag: bool = False) -> "LagSpec":
        return cls(
            {
                "temp_avg": 3,
                "rainy_days": 2,
                "rainfall_mm": 2,
                "sun_hours": 2,
                "sun_days": 2,
                "humidity": 1,
            },
            case_lag=case_lag,
        )

    @classmethod
    def zeros(cls, case_lag: bool = False) -> "LagSpec":
        return cls({c: 0 for c in CLIMATE_COLUMNS}, case_lag=case_lag)

    def with_case_lag(self, flag: bool = True) -> "LagSpec":
        return LagSpec(self.lags, case_lag=flag)

    def replace(self, **overrides: int) -> "LagSpec":
        lags = dict(self.lags)
        lags.update(overrides)
        return LagSpec(lags, self.case_lag)

    def max_lag(self, variables: Iterable[str]) -> int:
        used = [self.lags[v] for v in variables]
        if self.case_lag:
            used.append(1)
        return max(used, default=0)


@dataclass(frozen=True)
class FeatureSet:
    id: str
    variables: tuple[str, ...]

    def __str__(self) -> str:
        return self.id


FEATURE_SETS = {
    "SET1": FeatureSet("SET1", ("temp_avg", "rainy_days", "sun_hours", "humidity")),
    "SET2": FeatureSet("SET2", ("temp_avg", "rainy_days", "sun_days", "humidity")),
    "SET3": FeatureSet("SET3", ("temp_avg", "rainfall_mm", "sun_days", "humidity")),
    "SET4": FeatureSet("SET4", ("temp_avg", "rainfall_mm", "sun_hours", "humidity")),
}


def feature_set(name: str) -> FeatureSet:
    key = name.upper().replace("-", "")
    try:
        return FEATURE_SETS[key]
    except KeyError:
        raise SchemaError(f"unknown feature set {name!r}; expected one of {sorted(FEATURE_SETS)}") from None


@dataclass(frozen=True)
class DesignMatrix:
    months: tuple[MonthIndex, ...]
    X: np.ndarray
    columns: tuple[str, ...]
    y: np.ndarray
    split: MonthIndex | None = None
    feature_set: str = ""

    def __post_init__(self):
        object.__setattr__(self, "months", tuple(self.months))
        object.__setattr__(self, "columns", tuple(self.columns))
        X = _frozen(self.X).reshape(len(self.months), len(self.columns))
        y = _frozen(self.y)
        if len(y) != len(self.months):
            raise SchemaError("design: target length differs from months")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise SchemaError("design: missing entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.months)

    @property
    def has_case_lag(self) -> bool:
        return CASE_LAG_COLUMN in self.columns

    def climate_only(self) -> "DesignMatrix":
        keep = [i for i, c in enumerate(self.columns) if c != CASE_LAG_COLUMN]
        return DesignMatrix(
            self.months, self.X[:, keep], [self.columns[i] for i in keep], self.y, self.split, self.feature_set
        )


# -- operations --------------------------------------------------------------

def align_panel(cases: CaseSeries, climate: ClimateTable, division: str = "") -> AlignedPanel:
    """Join cases and climate on the intersection of their month ranges."""
    if not cases.months or not climate.months:
        raise EmptyOverlap("empty input series")
    _check_consecutive(cases.months, "cases")
    _check_consecutive(climate.months, "climate")
    start = max(cases.months[0], climate.months[0])
    stop = min(cases.months[-1], climate.months[-1])
    if start > stop:
        raise EmptyOverlap(
            f"cases {cases.months[0]}..{cases.months[-1]} and climate "
            f"{climate.months[0]}..{climate.months[-1]} do not overlap"
        )
    n = stop.ordinal - start.ordinal + 1
    i0 = start.ordinal - cases.months[0].ordinal
    j0 = start.ordinal - climate.months[0].ordinal
    return AlignedPanel(
        division=division,
        months=month_range(start, n),
        cases=cases.counts[i0:i0 + n],
        climate={c: climate.columns[c][j0:j0 + n] for c in CLIMATE_COLUMNS},
    )


def build_design(panel: AlignedPanel, fset: FeatureSet, lags: LagSpec) -> DesignMatrix:
    """Lag each climate column of ``fset`` and trim the rows the shift leaves empty.

    Column ``v`` at retained month t holds ``panel[v][t - lag(v)]``; with
    ``lags.case_lag`` an extra ``cases_lag1`` column holds Y(t-1).
    """
    missing = [v for v in fset.variables if v not in lags.lags]
    if missing:
        raise SchemaError(f"no lag given for {', '.join(missing)}")
    max_lag = lags.max_lag(fset.variables)
    n = len(panel)
    if n < max_lag + 2:
        raise InsufficientLength(f"panel has {n} months, need at least {max_lag + 2}")
    cols, names = [], []
    for v in fset.variables:
        lag = lags.lags[v]
        cols.append(panel.climate[v][max_lag - lag:n - lag])
        names.append(f"{v}_lag{lag}")
    if lags.case_lag:
        cols.append(panel.cases[max_lag - 1:n - 1].astype(float))
        names.append(CASE_LAG_COLUMN)
    X = np.column_stack(cols) if cols else np.empty((n - max_lag, 0))
    return DesignMatrix(
        months=panel.months[max_lag:],
        X=X,
        columns=names,
        y=panel.cases[max_lag:].astype(float),
        feature_set=fset.id,
    )


def split_design(design: DesignMatrix, test_months: int) -> tuple[DesignMatrix, DesignMatrix]:
    """Chronological split: the last ``test_months`` rows form the test window."""
    rows = len(design)
    if not 1 <= test_months <= rows - 12:
        raise SplitTooLarge(
            f"test window of {test_months} months needs 1 <= n <= {rows - 12} for {rows} rows"
        )
    cut = rows - test_months
    boundary = design.months[cut]

    def part(sl):
        return DesignMatrix(design.months[sl], design.X[sl], design.columns, design.y[sl], boundary, design.feature_set)

    return part(slice(0, cut)), part(slice(cut, rows))


# -- CSV I/O -----------------------------------------------------------------

def _read_rows(path, header: Sequence[str], what: str) -> list[dict]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{what} file {path} is empty")
        fields = [f.strip() for f in reader.fieldnames]
        missing = [h for h in header if h not in fields]
        if missing:
            raise SchemaError(f"{what} file {path}: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in row.items() if k is not None}
            for h in header:
                if row.get(h) in (None, ""):
                    raise SchemaError(f"{what} file {path}, line {lineno}: missing value for {h}")
            row["_line"] = lineno
            rows.append(row)
    return rows


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise SchemaError(f"{where}: non-finite value {text!r}")
    return value


def _parse_count(text: str, where: str) -> int:
    try:
        value = int(text)
    except ValueError:
        value = _parse_float(text, where)
        if value != int(value):
            raise SchemaError(f"{where}: case count must be an integer, got {text!r}") from None
        value = int(value)
    if value < 0:
        raise SchemaError(f"{where}: negative case count")
    return value


def read_cases_csv(path) -> CaseSeries:
    rows = _read_rows(path, CASES_HEADER, "cases")
    months = [MonthIndex.parse(r["month"]) for r in rows]
    counts = [_parse_count(r["cases"], f"{path}:{r['_line']}") for r in rows]
    order = np.argsort([m.ordinal for m in months], kind="stable")
    return CaseSeries(tuple(months[i] for i in order), np.array(counts, dtype=np.int64)[order])


def read_climate_csv(path) -> ClimateTable:
    rows = _read_rows(path, CLIMATE_HEADER, "climate")
    months = [MonthIndex.parse(r["month"]) for r in rows]
    order = np.argsort([m.ordinal for m in months], kind="stable")
    cols = {
        c: np.array([_parse_float(r[c], f"{path}:{r['_line']}:{c}") for r in rows])[order]
        for c in CLIMATE_COLUMNS
    }
    return ClimateTable(tuple(months[i] for i in order), cols)


def load_panel(cases_path, climate_path, division: str = "") -> AlignedPanel:
    return align_panel(read_cases_csv(cases_path), read_climate_csv(climate_path), division)


def format_float(x: float) -> str:
    """Shortest text that parses back to the identical double."""
    return repr(float(x))


def write_panel_csv(panel: AlignedPanel, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_HEADER)
        for i, m in enumerate(panel.months):
            w.writerow([str(m), int(panel.cases[i])] + [format_float(panel.climate[c][i]) for c in CLIMATE_COLUMNS])


def read_panel_csv(path, division: str = "") -> AlignedPanel:
    rows = _read_rows(path, PANEL_HEADER, "panel")
    return AlignedPanel(
        division=division,
        months=tuple(MonthIndex.parse(r["month"]) for r in rows),
        cases=np.array([_parse_count(r["cases"], f"{path}:{r['_line']}") for r in rows], dtype=np.int64),
        climate={c: np.array([_parse_float(r[c], f"{path}:{r['_line']}") for r in rows]) for c in CLIMATE_COLUMNS},
    )


def write_cases_csv(series: CaseSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CASES_HEADER)
        for m, c in zip(series.months, series.counts):
            w.writerow([str(m), int(c)])


def write_climate_csv(table: ClimateTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLIMATE_HEADER)
        for i, m in enumerate(table.months):
            w.writerow([str(m)] + [format_float(table.columns[c][i]) for c in CLIMATE_COLUMNS])
