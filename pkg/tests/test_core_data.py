import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climlag.core_data import (
    CASE_LAG_COLUMN,
    CLIMATE_COLUMNS,
    FEATURE_SETS,
    AlignedPanel,
    CaseSeries,
    ClimateTable,
    LagSpec,
    MonthIndex,
    align_panel,
    build_design,
    feature_set,
    month_range,
    read_cases_csv,
    read_climate_csv,
    read_panel_csv,
    split_design,
    write_panel_csv,
)
from climlag.errors import EmptyOverlap, GapError, InsufficientLength, SchemaError, SplitTooLarge
from climlag.fixtures import synthetic_panel


def climate_for(months, rng=None, **fixed):
    n = len(months)
    rng = rng or np.random.default_rng(0)
    cols = {
        "temp_avg": rng.uniform(15, 32, n),
        "rainy_days": rng.integers(0, 28, n).astype(float),
        "rainfall_mm": rng.uniform(0, 400, n),
        "sun_hours": rng.uniform(50, 300, n),
        "sun_days": rng.integers(0, 28, n).astype(float),
        "humidity": rng.uniform(40, 95, n),
    }
    cols.update({k: np.asarray(v, dtype=float) for k, v in fixed.items()})
    return ClimateTable(tuple(months), cols)


# -- MonthIndex ----------------------------------------------------------------

def test_month_successor_wraps_year():
    assert MonthIndex(2022, 12).succ() == MonthIndex(2023, 1)
    assert str(MonthIndex(2023, 1)) == "2023-01"
    assert MonthIndex.parse("2025-10") == MonthIndex(2025, 10)


def test_month_ordering_and_shift():
    assert MonthIndex(2022, 12) < MonthIndex(2023, 1)
    assert MonthIndex(2022, 1).shift(45) == MonthIndex(2025, 10)
    assert MonthIndex(2024, 2).days == 29


@pytest.mark.parametrize("text", ["2022-13", "2022-00", "22-01", "2022/01", ""])
def test_month_parse_rejects(text):
    with pytest.raises(SchemaError):
        MonthIndex.parse(text)


@given(st.integers(1900, 2100), st.integers(1, 12), st.integers(-500, 500))
def test_month_ordinal_roundtrip(year, month, k):
    m = MonthIndex(year, month)
    assert MonthIndex.from_ordinal(m.ordinal) == m
    assert m.shift(k).ordinal == m.ordinal + k
    assert MonthIndex.parse(str(m)) == m


# -- align_panel ---------------------------------------------------------------

def test_align_full_study_period():
    months = month_range(MonthIndex(2022, 1), 46)
    panel = align_panel(CaseSeries(months, np.arange(46)), climate_for(months), "Dhaka")
    assert len(panel) == 46
    assert panel.months[0] == MonthIndex(2022, 1) and panel.months[-1] == MonthIndex(2025, 10)


def test_align_single_month_identity():
    m = (MonthIndex(2023, 5),)
    clim = climate_for(m)
    panel = align_panel(CaseSeries(m, [17]), clim)
    assert len(panel) == 1 and panel.cases[0] == 17
    for c in CLIMATE_COLUMNS:
        assert panel.climate[c][0] == clim.columns[c][0]


def test_align_intersection():
    case_months = month_range(MonthIndex(2022, 1), 6)
    clim_months = month_range(MonthIndex(2022, 4), 9)
    panel = align_panel(CaseSeries(case_months, [1, 2, 3, 4, 5, 6]), climate_for(clim_months))
    expected = {str(m) for m in case_months} & {str(m) for m in clim_months}
    assert [str(m) for m in panel.months] == sorted(expected) == ["2022-04", "2022-05", "2022-06"]
    assert list(panel.cases) == [4, 5, 6]


def test_align_disjoint_raises():
    a = month_range(MonthIndex(2022, 1), 3)
    b = month_range(MonthIndex(2023, 1), 3)
    with pytest.raises(EmptyOverlap):
        align_panel(CaseSeries(a, [1, 2, 3]), climate_for(b))


def test_gap_raises():
    months = (MonthIndex(2022, 1), MonthIndex(2022, 2), MonthIndex(2022, 4))
    with pytest.raises(GapError):
        align_panel(CaseSeries(months, [1, 2, 3]), climate_for(month_range(MonthIndex(2022, 1), 4)))


def test_missing_climate_column_raises():
    months = month_range(MonthIndex(2022, 1), 3)
    cols = climate_for(months).columns
    cols = {k: v for k, v in cols.items() if k != "humidity"}
    with pytest.raises(SchemaError, match="humidity"):
        ClimateTable(months, cols)


@pytest.mark.parametrize("field,value", [("rainy_days", 32.0), ("humidity", 101.0), ("humidity", -1.0)])
def test_panel_range_checks(field, value):
    months = month_range(MonthIndex(2022, 1), 3)
    clim = climate_for(months, **{field: [value, 1.0, 1.0]})
    with pytest.raises(SchemaError):
        align_panel(CaseSeries(months, [1, 2, 3]), clim)


def test_negative_cases_rejected():
    months = month_range(MonthIndex(2022, 1), 2)
    with pytest.raises(SchemaError):
        CaseSeries(months, [1, -2])


def test_panel_is_immutable(panel):
    with pytest.raises(ValueError):
        panel.cases[0] = 5


# -- build_design --------------------------------------------------------------

def test_hand_shift_lag_two():
    months = month_range(MonthIndex(2022, 1), 5)
    clim = climate_for(months, temp_avg=[10, 20, 30, 40, 50])
    panel = align_panel(CaseSeries(months, [0, 1, 2, 3, 4]), clim)
    fset = feature_set("SET1")
    lags = LagSpec.zeros().replace(temp_avg=2)
    design = build_design(panel, fset, lags)
    assert list(design.X[:, 0]) == [10, 20, 30]
    assert design.months == months[2:]
    assert design.columns[0] == "temp_avg_lag2"


def test_zero_lags_identity(panel):
    fset = feature_set("SET3")
    design = build_design(panel, fset, LagSpec.zeros())
    assert len(design) == len(panel)
    for j, v in enumerate(fset.variables):
        np.testing.assert_array_equal(design.X[:, j], panel.climate[v])


def test_default_lags_on_46_months(panel):
    assert len(panel) == 46
    for name in FEATURE_SETS:
        design = build_design(panel, feature_set(name), LagSpec.default())
        assert len(design) == 43


def test_case_lag_column(panel):
    design = build_design(panel, feature_set("SET2"), LagSpec.default(case_lag=True))
    assert design.columns[-1] == CASE_LAG_COLUMN and design.has_case_lag
    np.testing.assert_array_equal(design.X[:, -1], panel.cases[2:45])
    climate_only = build_design(panel, feature_set("SET2"), LagSpec.default())
    assert design.X.shape[1] == climate_only.X.shape[1] + 1
    np.testing.assert_array_equal(design.climate_only().X, climate_only.X)


def test_insufficient_length():
    months = month_range(MonthIndex(2022, 1), 4)
    panel = align_panel(CaseSeries(months, [1, 2, 3, 4]), climate_for(months))
    with pytest.raises(InsufficientLength):
        build_design(panel, feature_set("SET1"), LagSpec.default())


@settings(max_examples=40, deadline=None)
@given(st.integers(14, 40), st.lists(st.integers(0, 6), min_size=6, max_size=6), st.booleans(), st.integers(0, 10**6))
def test_lag_shift_property(n, lag_values, case_lag, seed):
    rng = np.random.default_rng(seed)
    months = month_range(MonthIndex(2021, 3), n)
    panel = align_panel(CaseSeries(months, rng.integers(0, 100, n)), climate_for(months, rng))
    lags = LagSpec(dict(zip(CLIMATE_COLUMNS, lag_values)), case_lag)
    for name, fset in FEATURE_SETS.items():
        design = build_design(panel, fset, lags)
        max_lag = lags.max_lag(fset.variables)
        assert len(design) == n - max_lag
        for j, v in enumerate(fset.variables):
            L = lags.lags[v]
            for i, t in enumerate(range(max_lag, n)):
                assert design.X[i, j] == panel.climate[v][t - L]
        np.testing.assert_array_equal(design.y, panel.cases[max_lag:])


# -- split_design --------------------------------------------------------------

def test_split_nine(panel):
    design = build_design(panel, feature_set("SET1"), LagSpec.default())
    train, test = split_design(design, 9)
    assert (len(train), len(test)) == (34, 9)
    assert train.split == test.split == design.months[34]
    assert train.months + test.months == design.months
    np.testing.assert_array_equal(np.vstack([train.X, test.X]), design.X)


def test_split_boundary_and_zero(panel):
    design = build_design(panel, feature_set("SET1"), LagSpec.default())
    train, _ = split_design(design, len(design) - 12)
    assert len(train) == 12
    with pytest.raises(SplitTooLarge):
        split_design(design, 0)
    with pytest.raises(SplitTooLarge):
        split_design(design, len(design) - 11)


# -- CSV I/O -------------------------------------------------------------------

def test_panel_csv_roundtrip(tmp_path):
    panel = synthetic_panel("X", seed=11)
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, path)
    assert read_panel_csv(path, "X") == panel


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1e4, allow_nan=False, allow_subnormal=False), min_size=3, max_size=3))
def test_panel_roundtrip_exact_floats(tmp_path_factory, values):
    months = month_range(MonthIndex(2020, 1), 3)
    panel = align_panel(CaseSeries(months, [1, 2, 3]), climate_for(months, rainfall_mm=values))
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_panel_csv(panel, path)
    assert read_panel_csv(path) == panel


def test_reader_reports_missing_column(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("month,temp_avg,rainy_days,rainfall_mm,sun_hours,sun_days\n2022-01,1,1,1,1,1\n")
    with pytest.raises(SchemaError, match="humidity"):
        read_climate_csv(path)


def test_reader_rejects_blank_cell(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("month,cases\n2022-01,\n")
    with pytest.raises(SchemaError, match="cases"):
        read_cases_csv(path)
