import csv
import json
import random
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from climlag.errors import LengthMismatch, NoValidRecords
from climlag.evaluation import (
    FAMILIES,
    MatrixConfig,
    ResultRecord,
    read_forecast_csv,
    read_matrix_csv,
    run_cell,
    run_matrix,
    select_best,
    write_champions_csv,
    write_forecast_csv,
    write_matrix_csv,
    write_summary_csv,
)
from climlag.metrics import MetricTriple, metrics
from climlag.models.gbt import GbtConfig
from climlag.models.mlp import MlpConfig
from climlag.models.sarimax import SarimaxOrder

FIXTURE = Path(__file__).parent / "data" / "metric_fixture.json"


# -- metrics -------------------------------------------------------------------------

@pytest.mark.parametrize("case", json.loads(FIXTURE.read_text()), ids=lambda c: str(c["observed"]))
def test_metrics_match_exact_oracle(case):
    m = metrics(case["observed"], case["predicted"])
    assert m.rmse == pytest.approx(case["rmse"], abs=1e-10)
    assert m.mae == pytest.approx(case["mae"], abs=1e-10)
    if case["mape_pct"] is None:
        assert m.mape_pct is None
    else:
        assert m.mape_pct == pytest.approx(case["mape_pct"], abs=1e-10)
    assert m.mape_excluded == case["mape_excluded"]


def test_two_point_example():
    m = metrics([100, 200], [110, 180])
    assert m.rmse == pytest.approx(15.8114, abs=1e-4)
    assert m.mae == 15.0
    assert m.mape_pct == pytest.approx(10.0, abs=1e-4)  # (10% + 10%) / 2


def test_perfect_forecast():
    assert metrics([3, 0, 8], [3, 0, 8]).as_row() == (0.0, 0.0, 0.0)


def test_length_checks():
    with pytest.raises(LengthMismatch):
        metrics([1, 2], [1])
    with pytest.raises(LengthMismatch):
        metrics([], [])


# magnitudes below ~1e-154 square to zero, which would test float underflow instead
COUNT = st.one_of(st.just(0.0), st.floats(1e-6, 1e5))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(COUNT, COUNT), min_size=1, max_size=30), st.randoms())
def test_rmse_dominates_mae_and_permutation_invariance(pairs, rnd):
    y, p = map(np.array, zip(*pairs))
    m = metrics(y, p)
    assert m.rmse >= m.mae * (1 - 1e-12) >= 0
    order = list(range(len(y)))
    rnd.shuffle(order)
    m2 = metrics(y[order], p[order])
    assert m2.rmse == pytest.approx(m.rmse, rel=1e-12, abs=1e-12)
    assert m2.mae == pytest.approx(m.mae, rel=1e-12, abs=1e-12)


# -- matrix --------------------------------------------------------------------------

def _stub(base, train, test, cfg):
    pred = np.full(len(test.y), float(np.mean(train.y)))
    return ResultRecord(**base, metrics=metrics(test.y, pred), months=test.months,
                        observed=np.asarray(test.y), predicted=pred, n_params=1)


def _failing(base, train, test, cfg):
    raise np.linalg.LinAlgError("stub failure")


STUBS = {f: _stub for f in FAMILIES}


def test_full_matrix_has_28_cells(panel):
    recs = run_matrix(panel, cfg=MatrixConfig(), fitters=STUBS)
    assert len(recs) == 28
    keys = {(r.family, r.variant, r.feature_set) for r in recs}
    assert len(keys) == 28
    assert {r.variant for r in recs if r.family == "SARIMAX"} == {1}
    assert sum(r.family == "SARIMAX" for r in recs) == 4
    assert all(r.status == "ok" for r in recs)


def test_small_matrix(panel):
    assert len(run_matrix(panel, families=("SARIMAX",), feature_sets=("SET-1",), fitters=STUBS)) == 1
    assert len(run_matrix(panel, families=("MPR",), feature_sets=("SET-1",), fitters=STUBS)) == 2


def test_failing_stub_is_isolated(panel):
    fitters = dict(STUBS, ANN=_failing)
    recs = run_matrix(panel, fitters=fitters)
    failed = [r for r in recs if r.status == "failed"]
    assert len(failed) == 8 and all(r.family == "ANN" for r in failed)
    assert all("stub failure" in r.message for r in failed)
    assert all(r.status == "ok" for r in recs if r.family != "ANN")


def test_unknown_feature_set_recorded_as_failure(panel):
    rec = run_cell(panel, "MPR", 1, "SET-9", MatrixConfig(), STUBS)
    assert rec.status == "failed"


def test_oversized_test_window_recorded_as_failure(panel):
    rec = run_cell(panel, "MPR", 1, "SET-1", MatrixConfig(test_months=40), STUBS)
    assert rec.status == "failed" and "SplitTooLarge" in rec.message


def test_real_cells_run(panel):
    cfg = MatrixConfig(
        sarimax_grid=(SarimaxOrder(0, 1, 1, 1, 0, 0),),
        mlp_grid=(MlpConfig((4,), 1e-2, 0.0, 200),),
        gbt_grid=(GbtConfig(10, 0.3, 2),),
    )
    recs = run_matrix(panel, feature_sets=("SET-3",), cfg=cfg)
    assert [r.label for r in recs] == ["SARIMAX", "MPR-1", "MPR-2", "ANN-1", "ANN-2", "XGB-1", "XGB-2"]
    for r in recs:
        assert r.status in ("ok", "diverged"), r.message
        if r.status == "ok":
            assert len(r.predicted) == 9 and r.metrics.rmse >= r.metrics.mae
    ann1, ann2 = (r for r in recs if r.family == "ANN")
    assert len(ann2.columns) == len(ann1.columns) + 1


def test_matrix_is_deterministic(panel):
    cfg = MatrixConfig(mlp_grid=(MlpConfig((4,), 1e-2, 0.0, 100),), gbt_grid=(GbtConfig(5, 0.3, 2),))
    a = run_matrix(panel, families=("MPR", "ANN", "XGB"), feature_sets=("SET-2",), cfg=cfg)
    b = run_matrix(panel, families=("MPR", "ANN", "XGB"), feature_sets=("SET-2",), cfg=cfg)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.predicted, rb.predicted)


def test_explosive_mpr_forecast_is_diverged(panel):
    # a near-zero explosion threshold flags any forecast as blown up
    rec = run_cell(panel, "MPR", 2, "SET-1", MatrixConfig(explosion_factor=1e-9))
    assert rec.status == "diverged"


# -- selection -----------------------------------------------------------------------

def _rec(div, fam, var, fset, rmse, mae=None, n=3, status="ok"):
    m = MetricTriple(rmse, rmse * 0.8 if mae is None else mae, 10.0) if status == "ok" else None
    return ResultRecord(div, fam, var, fset, metrics=m, n_params=n, status=status)


DHAKA_SARIMAX_BEST = [("SET-1", 11300.41), ("SET-2", 5872.93), ("SET-3", 2738.29), ("SET-4", 6972.58)]


def test_published_dhaka_sarimax_ordering():
    recs = [_rec("Dhaka", "SARIMAX", 1, s, r) for s, r in DHAKA_SARIMAX_BEST]
    sel = select_best(recs)
    ordered = sorted(sel.per_set.values(), key=lambda r: r.metrics.rmse)
    assert [r.feature_set for r in ordered] == ["SET-3", "SET-2", "SET-4", "SET-1"]
    assert sel.champions["Dhaka"].feature_set == "SET-3"


def test_single_record_is_champion():
    r = _rec("Barishal", "XGB", 2, "SET-1", 5.0)
    assert select_best([r]).champions["Barishal"] is r


def test_ties_use_mae_then_params():
    a = _rec("D", "ANN", 1, "SET-1", 10.0, mae=7.0, n=50)
    b = _rec("D", "ANN", 2, "SET-1", 10.0, mae=6.0, n=90)
    c = _rec("D", "MPR", 1, "SET-1", 10.0, mae=6.0, n=4)
    sel = select_best([a, b, c])
    assert sel.per_set[("D", "ANN", "SET-1")] is b
    assert sel.champions["D"] is c


def test_failed_and_diverged_are_excluded():
    good = _rec("Barishal", "MPR", 1, "SET-2", 900.0)
    bad = _rec("Barishal", "MPR", 2, "SET-2", 0.0, status="diverged")
    sel = select_best([good, bad])
    assert sel.champions["Barishal"] is good
    assert sel.excluded == [bad]
    with pytest.raises(NoValidRecords):
        select_best([bad])


def test_selection_is_order_invariant_and_champion_is_minimal():
    rng = random.Random(4)
    recs = [
        _rec(div, fam, var, s, rng.uniform(100, 5000), n=rng.randint(1, 50))
        for div in ("Dhaka", "Barishal") for fam in FAMILIES for var in (1, 2) for s in ("SET-1", "SET-2")
    ]
    base = select_best(recs)
    for _ in range(10):
        shuffled = recs[:]
        rng.shuffle(shuffled)
        sel = select_best(shuffled)
        assert sel.champions == base.champions and sel.per_set == base.per_set
    for div, champ in base.champions.items():
        assert all(champ.metrics.rmse <= r.metrics.rmse for r in recs if r.division == div)


# -- CSV output ----------------------------------------------------------------------

def test_matrix_csv_round_trip(tmp_path, panel):
    recs = run_matrix(panel, fitters=dict(STUBS, XGB=_failing))
    path = tmp_path / "matrix.csv"
    write_matrix_csv(recs, path)
    back = read_matrix_csv(path)
    assert len(back) == 28
    for a, b in zip(recs, back):
        assert a.key == b.key and a.status == b.status and a.message == b.message
        assert (a.metrics is None) == (b.metrics is None)
        if a.metrics:
            assert a.metrics == b.metrics


def test_summary_csv_layout(tmp_path):
    recs = [_rec("Dhaka", "SARIMAX", 1, s, r) for s, r in DHAKA_SARIMAX_BEST]
    for r in recs:
        r.hyperparameters = "(1,1,0)(1,0,0,12)"
    path = tmp_path / "summary.csv"
    write_summary_csv(recs, "Dhaka", path)
    assert path.read_text().splitlines()[0] == "feature_set,order,rmse,mae,mape,aic,bic,ljung_box_p"
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["feature_set"] for r in rows] == ["SET-3", "SET-2", "SET-4", "SET-1"]
    assert rows[0]["order"] == "SARIMAX(1,1,0)(1,0,0,12)"
    assert float(rows[0]["rmse"]) == 2738.29


def test_champions_and_forecast_csv(tmp_path, panel):
    recs = run_matrix(panel, families=("MPR",), fitters=STUBS)
    sel = select_best(recs)
    write_champions_csv(sel, tmp_path / "champions.csv")
    rows = (tmp_path / "champions.csv").read_text().splitlines()
    assert rows[0].startswith("division,scope,family")
    assert sum(",champion," in r for r in rows) == 1
    champ = sel.champions[panel.division]
    write_forecast_csv(champ, tmp_path / "forecast.csv")
    months, obs, pred = read_forecast_csv(tmp_path / "forecast.csv")
    assert months == list(champ.months)
    np.testing.assert_array_equal(obs, champ.observed)
    np.testing.assert_array_equal(pred, champ.predicted)
