"""Model x feature-set experiment matrix and best-model selection.

Each matrix cell fits one model family and variant on one feature set,
forecasts the held-out test window and records a :class:`ResultRecord`.
Failures are recorded with a status and never abort the matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_data import (
    FEATURE_SETS,
    AlignedPanel,
    LagSpec,
    MonthIndex,
    build_design,
    feature_set,
    format_float,
    split_design,
)
from .diagnostics import aic_bic, ljung_box
from .errors import ClimlagError, Diverged, NoValidRecords
from .metrics import MetricTriple, metrics
from .models import gbt, mlp, poisson, sarimax

__all__ = [
    "FAMILIES",
    "MatrixConfig",
    "MetricTriple",
    "ResultRecord",
    "Selection",
    "metrics",
    "run_cell",
    "run_matrix",
    "select_best",
    "write_matrix_csv",
    "write_summary_csv",
    "write_champions_csv",
    "write_forecast_csv",
    "read_matrix_csv",
]

FAMILIES = ("SARIMAX", "MPR", "ANN", "XGB")
VARIANTS = {"SARIMAX": (1,), "MPR": (1, 2), "ANN": (1, 2), "XGB": (1, 2)}
STATUSES = ("ok", "diverged", "failed")


@dataclass(frozen=True)
class MatrixConfig:
    test_months: int = 9
    lags: LagSpec = field(default_factory=LagSpec.default)
    sarimax_grid: tuple = sarimax.DEFAULT_GRID
    exog_mode: str = "differenced"
    mlp_grid: tuple = mlp.DEFAULT_GRID
    mlp_val_months: int = 6
    gbt_grid: tuple = gbt.DEFAULT_GRID
    gbt_folds: int = 3
    mpr_recursive: bool = False
    # test predictions above this multiple of the largest training count are
    # treated as a blown-up forecast and the run is marked diverged
    explosion_factor: float = 10.0
    seed: int = 0


@dataclass(eq=False)
class ResultRecord:
    division: str
    family: str
    variant: int
    feature_set: str
    hyperparameters: str = ""
    metrics: MetricTriple | None = None
    aic: float | None = None
    bic: float | None = None
    lb_p: float | None = None
    n_params: int | None = None
    status: str = "ok"
    message: str = ""
    months: tuple = ()
    observed: np.ndarray | None = None
    predicted: np.ndarray | None = None
    columns: tuple = ()
    model: object = None  # fitted model (not serialized in the matrix CSV)

    @property
    def label(self) -> str:
        return self.family if self.family == "SARIMAX" else f"{self.family}-{self.variant}"

    @property
    def key(self) -> tuple:
        return (self.division, FAMILIES.index(self.family) if self.family in FAMILIES else 99,
                self.family, self.variant, self.feature_set)


# -- cells -------------------------------------------------------------------------

def _explosive(pred, y_train, factor) -> bool:
    return not np.all(np.isfinite(pred)) or float(np.max(pred)) > factor * max(1.0, float(np.max(y_train)))


def _record(base: dict, test, pred, **extra) -> ResultRecord:
    return ResultRecord(**base, metrics=metrics(test.y, pred), months=test.months, columns=test.columns,
                        observed=np.asarray(test.y), predicted=np.asarray(pred, dtype=float), **extra)


def _fit_sarimax(base, train, test, cfg: MatrixConfig):
    ranked = sarimax.grid_search(train.y, test.y, train.X, test.X, grid=cfg.sarimax_grid, exog_mode=cfg.exog_mode)
    best = ranked[0]
    return ResultRecord(**base, hyperparameters=str(best.order), metrics=best.metrics, aic=best.aic, bic=best.bic,
                        lb_p=best.lb_p, n_params=best.fit.n_params, months=test.months, columns=test.columns,
                        observed=np.asarray(test.y), predicted=best.forecast, model=ranked)


def _fit_mpr(base, train, test, cfg: MatrixConfig):
    variant = f"MPR{base['variant']}"
    fit = poisson.fit_irls(train.X, train.y, variant, columns=train.columns)
    pred = poisson.predict(fit, test.X, recursive=cfg.mpr_recursive)
    if _explosive(pred, train.y, cfg.explosion_factor):
        raise Diverged(f"explosive test predictions (max {float(np.max(pred)):.6g})")
    aic, bic = aic_bic(fit.loglik, fit.n_params, len(train.y))
    mu = poisson.predict(fit, train.X)
    pearson_resid = (train.y - mu) / np.sqrt(mu)
    lb = ljung_box(pearson_resid, 12).p if len(train.y) > 13 else None
    note = "" if fit.converged else "IRLS stopped before the score tolerance"
    return _record(base, test, pred, hyperparameters="recursive" if cfg.mpr_recursive else "one-step",
                   aic=aic, bic=bic, lb_p=lb, n_params=fit.n_params, message=note, model=fit)


def _fit_ann(base, train, test, cfg: MatrixConfig):
    cut = len(train.y) - cfg.mlp_val_months
    if cfg.mlp_val_months < 1 or cut < 2:
        raise ValueError(f"validation holdout of {cfg.mlp_val_months} months leaves {cut} tuning rows")
    grid = [mlp.MlpConfig(c.hidden_layers, c.learning_rate, c.l2_penalty, c.max_iterations, cfg.seed, c.tol)
            for c in cfg.mlp_grid]
    tuned = mlp.tune(grid, train.X[:cut], train.y[:cut], train.X[cut:], train.y[cut:])
    net = mlp.train(tuned.config, train.X, train.y)
    pred = mlp.predict(net, test.X)
    c = tuned.config
    hp = f"hidden={'x'.join(map(str, c.hidden_layers))};lr={c.learning_rate:g};l2={c.l2_penalty:g}"
    return _record(base, test, pred, hyperparameters=hp, n_params=net.n_params, model=net)


def _fit_xgb(base, train, test, cfg: MatrixConfig):
    cv = gbt.grid_search_cv(cfg.gbt_grid, train.X, train.y, cfg.gbt_folds)
    ens = gbt.boost(train.X, train.y, cv.config)
    pred = gbt.predict(ens, test.X)
    c = cv.config
    hp = (f"rounds={c.n_rounds};eta={c.learning_rate:g};depth={c.max_depth};lambda={c.reg_lambda:g};"
          f"gamma={c.gamma:g};mcw={c.min_child_weight:g};folds={cfg.gbt_folds}")
    leaves = sum(int(np.sum(t.feature < 0)) for t in ens.trees)
    return _record(base, test, pred, hyperparameters=hp, n_params=leaves, model=ens)


FITTERS = {"SARIMAX": _fit_sarimax, "MPR": _fit_mpr, "ANN": _fit_ann, "XGB": _fit_xgb}


def run_cell(panel: AlignedPanel, family: str, variant: int, set_name: str, cfg: MatrixConfig,
             fitters=None) -> ResultRecord:
    """Fit one (family, variant, feature set) cell; errors become a status."""
    fitters = FITTERS if fitters is None else fitters
    try:
        set_name = feature_set(set_name).id  # "SET-3" and "set3" name the same set
    except ClimlagError:
        pass  # recorded as a failure below
    base = dict(division=panel.division, family=family, variant=variant, feature_set=set_name)
    try:
        fset = feature_set(set_name)
        design = build_design(panel, fset, cfg.lags.with_case_lag(variant == 2))
        train, test = split_design(design, cfg.test_months)
        return fitters[family](base, train, test, cfg)
    except Diverged as exc:
        return ResultRecord(**base, status="diverged", message=str(exc))
    except (ClimlagError, np.linalg.LinAlgError, FloatingPointError, ValueError, KeyError) as exc:
        return ResultRecord(**base, status="failed", message=f"{type(exc).__name__}: {exc}")


def matrix_cells(families=FAMILIES, variants=(1, 2), feature_sets=tuple(FEATURE_SETS)):
    for family in families:
        for variant in variants:
            if variant not in VARIANTS.get(family, (1, 2)):
                continue
            for set_name in feature_sets:
                yield family, variant, set_name


def run_matrix(panels, families=FAMILIES, variants=(1, 2), feature_sets=tuple(FEATURE_SETS),
               cfg: MatrixConfig | None = None, fitters=None, progress=None) -> list[ResultRecord]:
    """Attempt every (division, family, variant, set) combination.

    SARIMAX runs climate-only, so the full grid is 1*4 + 3*2*4 = 28 cells per
    division. Records come back in canonical key order.
    """
    cfg = MatrixConfig() if cfg is None else cfg
    if isinstance(panels, AlignedPanel):
        panels = [panels]
    panels = list(panels)
    cells = list(matrix_cells(families, variants, feature_sets))
    if not panels or not cells:
        raise ValueError("run_matrix needs at least one panel and one cell")
    records = []
    for panel in panels:
        for family, variant, set_name in cells:
            rec = run_cell(panel, family, variant, set_name, cfg, fitters)
            if progress is not None:
                progress(rec)
            records.append(rec)
    return sorted(records, key=lambda r: r.key)


# -- selection ---------------------------------------------------------------------

def _rank(rec: ResultRecord):
    n = rec.n_params if rec.n_params is not None else math.inf
    return (rec.metrics.rmse, rec.metrics.mae, n, rec.key)


@dataclass
class Selection:
    per_set: dict  # (division, family, set) -> record
    per_family: dict  # (division, family) -> record
    champions: dict  # division -> record
    excluded: list  # records with status != ok


def select_best(records) -> Selection:
    """Lowest test RMSE within (family, set), then per family, then per division.

    Ties are broken by lower MAE, then fewer parameters. Diverged and failed
    records are excluded and listed.
    """
    records = list(records)
    usable = lambda r: r.status == "ok" and r.metrics is not None
    ok = [r for r in records if usable(r)]
    if not ok:
        raise NoValidRecords("no record finished with status ok")
    excluded = sorted((r for r in records if not usable(r)), key=lambda r: r.key)

    def winners(group_key, pool):
        best = {}
        for r in pool:
            k = group_key(r)
            if k not in best or _rank(r) < _rank(best[k]):
                best[k] = r
        return dict(sorted(best.items()))

    per_set = winners(lambda r: (r.division, r.family, r.feature_set), ok)
    per_family = winners(lambda r: (r.division, r.family), per_set.values())
    champions = winners(lambda r: r.division, per_family.values())
    return Selection(per_set, per_family, champions, excluded)


# -- CSV output --------------------------------------------------------------------

MATRIX_HEADER = ("division", "family", "variant", "feature_set", "hyperparameters", "rmse", "mae", "mape",
                 "mape_excluded", "aic", "bic", "ljung_box_p", "n_params", "status", "message")
SUMMARY_HEADER = ("feature_set", "order", "rmse", "mae", "mape", "aic", "bic", "ljung_box_p")
CHAMPION_HEADER = ("division", "scope", "family", "variant", "feature_set", "hyperparameters", "rmse", "mae", "mape")
FORECAST_HEADER = ("month", "observed", "predicted")


def _num(x) -> str:
    return "" if x is None else format_float(x)


def _writer(path):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_matrix_csv(records, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(MATRIX_HEADER)
        for r in sorted(records, key=lambda r: r.key):
            m = r.metrics
            w.writerow([r.division, r.family, r.variant, r.feature_set, r.hyperparameters,
                        _num(m and m.rmse), _num(m and m.mae), _num(m.mape_pct if m else None),
                        "" if m is None else m.mape_excluded, _num(r.aic), _num(r.bic), _num(r.lb_p),
                        "" if r.n_params is None else r.n_params, r.status, r.message])


def _opt_float(text):
    return None if text == "" else float(text)


def read_matrix_csv(path) -> list[ResultRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        m = None
        if row["rmse"] != "":
            m = MetricTriple(float(row["rmse"]), float(row["mae"]), _opt_float(row["mape"]), int(row["mape_excluded"]))
        out.append(ResultRecord(row["division"], row["family"], int(row["variant"]), row["feature_set"],
                                row["hyperparameters"], m, _opt_float(row["aic"]), _opt_float(row["bic"]),
                                _opt_float(row["ljung_box_p"]),
                                None if row["n_params"] == "" else int(row["n_params"]),
                                row["status"], row["message"]))
    return out


def write_summary_csv(records, division: str, path) -> None:
    """Best SARIMAX per feature set for one division, sorted by RMSE."""
    rows = [r for r in records if r.division == division and r.family == "SARIMAX" and r.status == "ok"]
    best = select_best(rows).per_set.values() if rows else []
    fh, w = _writer(path)
    with fh:
        w.writerow(SUMMARY_HEADER)
        for r in sorted(best, key=_rank):
            w.writerow([r.feature_set, f"SARIMAX{r.hyperparameters}", _num(r.metrics.rmse), _num(r.metrics.mae),
                        _num(r.metrics.mape_pct), _num(r.aic), _num(r.bic), _num(r.lb_p)])


def write_champions_csv(selection: Selection, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(CHAMPION_HEADER)
        rows = [("family", r) for r in selection.per_family.values()]
        rows += [("champion", r) for r in selection.champions.values()]
        for scope, r in rows:
            w.writerow([r.division, scope, r.family, r.variant, r.feature_set, r.hyperparameters,
                        _num(r.metrics.rmse), _num(r.metrics.mae), _num(r.metrics.mape_pct)])


def write_forecast_csv(record: ResultRecord, path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(FORECAST_HEADER)
        for m, y, p in zip(record.months, record.observed, record.predicted):
            w.writerow([str(m), _num(y), _num(p)])


def read_forecast_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return ([MonthIndex.parse(r["month"]) for r in rows], np.array([float(r["observed"]) for r in rows]),
            np.array([float(r["predicted"]) for r in rows]))
