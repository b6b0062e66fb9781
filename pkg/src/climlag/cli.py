"""Command-line front end.

Configuration is a flat text file::

    # comments start with '#'
    division = Dhaka
    division = Barishal          # repeated keys form a list
    data_dir = data
    test_months = 9
    lag.temp_avg = 3

Command-line flags override the file; ``--set key=value`` overrides any key
(repeat it to build a list). Exit codes: 0 ok, 2 configuration error,
3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import os
import platform
import sys
import tempfile
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, evaluation, reports
from .core_data import (
    CLIMATE_COLUMNS,
    FEATURE_SETS,
    LagSpec,
    align_panel,
    build_design,
    feature_set,
    load_panel,
    read_cases_csv,
    read_climate_csv,
    split_design,
    write_panel_csv,
)
from .correlation import best_lags, lagged_matrix
from .decomposition import LoessConfig, stl_decompose
from .diagnostics import acf, pacf_from_acf
from .errors import ClimlagError, ConfigError, NetworkError, SchemaError
from .fixtures import write_fixture
from .models import gbt, mlp
from .models.sarimax import DEFAULT_GRID, SarimaxOrder

log = logging.getLogger("climlag")


# -- configuration ---------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _order(text: str) -> str:
    return str(SarimaxOrder.parse(text))


def _family(text: str) -> str:
    name = text.strip().upper()
    if name not in evaluation.FAMILIES:
        raise ValueError(f"unknown family {text!r}; expected one of {', '.join(evaluation.FAMILIES)}")
    return name


def _set_name(text: str) -> str:
    return feature_set(text).id


def _hidden(text: str) -> str:
    widths = [int(w) for w in text.lower().split("x")]
    if min(widths) < 1:
        raise ValueError("hidden widths must be >= 1")
    return "x".join(map(str, widths))


# key -> (parser, is_list)
KEYS = {
    "division": (str, True),
    "data_dir": (str, False),
    "output_dir": (str, False),
    "fetch_url": (str, False),
    "seed": (int, False),
    "test_months": (int, False),
    "feature_set": (_set_name, True),
    "family": (_family, True),
    "variant": (int, True),
    "max_lag": (int, False),
    "acf_lags": (int, False),
    "stl_seasonal": (int, False),
    "stl_trend": (int, False),
    "stl_robust": (int, False),
    "exog_mode": (str, False),
    "mpr_recursive": (_bool, False),
    "explosion_factor": (float, False),
    "sarimax_order": (_order, True),
    "mlp_hidden": (_hidden, True),
    "mlp_lr": (float, True),
    "mlp_l2": (float, True),
    "mlp_max_iterations": (int, False),
    "mlp_val_months": (int, False),
    "gbt_rounds": (int, True),
    "gbt_eta": (float, True),
    "gbt_depth": (int, True),
    "gbt_lambda": (float, True),
    "gbt_gamma": (float, True),
    "gbt_min_child_weight": (float, True),
    "gbt_folds": (int, False),
}
LAG_PREFIX = "lag."


def parse_config_text(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    """``key = value`` lines in file order; blank lines and ``#`` comments skipped."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        pairs.append((key, value))
    return pairs


@dataclass
class RunConfig:
    division: list = field(default_factory=list)
    data_dir: str = "."
    output_dir: str = "out"
    fetch_url: str = ""
    seed: int = 0
    test_months: int = 9
    feature_set: list = field(default_factory=lambda: list(FEATURE_SETS))
    family: list = field(default_factory=lambda: list(evaluation.FAMILIES))
    variant: list = field(default_factory=lambda: [1, 2])
    max_lag: int = 4
    acf_lags: int = 24
    stl_seasonal: int = 13
    stl_trend: int = 23
    stl_robust: int = 1
    exog_mode: str = "differenced"
    mpr_recursive: bool = False
    explosion_factor: float = 10.0
    sarimax_order: list = field(default_factory=list)
    mlp_hidden: list = field(default_factory=list)
    mlp_lr: list = field(default_factory=list)
    mlp_l2: list = field(default_factory=list)
    mlp_max_iterations: int = 20000
    mlp_val_months: int = 6
    gbt_rounds: list = field(default_factory=list)
    gbt_eta: list = field(default_factory=list)
    gbt_depth: list = field(default_factory=list)
    gbt_lambda: list = field(default_factory=list)
    gbt_gamma: list = field(default_factory=list)
    gbt_min_child_weight: list = field(default_factory=list)
    gbt_folds: int = 3
    lags: dict = field(default_factory=lambda: dict(LagSpec.default().lags))

    @classmethod
    def from_pairs(cls, pairs) -> "RunConfig":
        cfg = cls()
        cfg.update(pairs)
        return cfg

    def update(self, pairs) -> None:
        """Apply ``(key, value)`` pairs; the pairs for a key replace its previous value."""
        grouped: dict = {}
        for key, value in pairs:
            grouped.setdefault(key, []).append(value)
        for key, values in grouped.items():
            if key.startswith(LAG_PREFIX):
                var = key[len(LAG_PREFIX):]
                if var not in CLIMATE_COLUMNS:
                    raise ConfigError(f"unknown lag variable {var!r}")
                if len(values) > 1:
                    raise ConfigError(f"{key} given {len(values)} times")
                try:
                    self.lags[var] = int(values[0])
                except ValueError:
                    raise ConfigError(f"{key}: not an integer: {values[0]!r}") from None
                continue
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            parse, is_list = KEYS[key]
            if not is_list and len(values) > 1:
                raise ConfigError(f"{key} takes one value, got {len(values)}")
            try:
                parsed = [parse(v) for v in values]
            except (ValueError, ClimlagError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
            setattr(self, key, parsed if is_list else parsed[0])
        self.validate()

    def validate(self) -> None:
        try:
            LagSpec(self.lags)
            LoessConfig(self.stl_seasonal, self.stl_trend, 2, self.stl_robust)
        except (ValueError, ClimlagError) as exc:
            raise ConfigError(str(exc)) from None
        if self.exog_mode not in ("differenced", "levels"):
            raise ConfigError(f"exog_mode must be 'differenced' or 'levels', got {self.exog_mode!r}")
        if any(v not in (1, 2) for v in self.variant):
            raise ConfigError("variant values must be 1 or 2")
        if self.gbt_folds < 2:
            raise ConfigError("gbt_folds must be >= 2")
        if self.mlp_max_iterations < 1:
            raise ConfigError("mlp_max_iterations must be >= 1")

    def to_text(self) -> str:
        """Canonical config text; parsing it reproduces this configuration."""
        lines = []
        for f in fields(self):
            if f.name == "lags":
                continue
            value = getattr(self, f.name)
            if isinstance(value, list):
                lines += [f"{f.name} = {v}" for v in value]
            else:
                lines.append(f"{f.name} = {value}")
        lines += [f"{LAG_PREFIX}{k} = {self.lags[k]}" for k in CLIMATE_COLUMNS]
        return "\n".join(lines) + "\n"

    # derived objects ------------------------------------------------------------
    def lag_spec(self) -> LagSpec:
        return LagSpec(self.lags)

    def loess(self) -> LoessConfig:
        return LoessConfig(self.stl_seasonal, self.stl_trend, 2, self.stl_robust)

    def matrix_config(self) -> evaluation.MatrixConfig:
        sar = tuple(SarimaxOrder.parse(o) for o in self.sarimax_order) or DEFAULT_GRID
        hidden = [tuple(int(w) for w in h.split("x")) for h in self.mlp_hidden] or [(16,), (32, 16)]
        mlp_grid = tuple(
            mlp.MlpConfig(h, lr, l2, self.mlp_max_iterations, self.seed)
            for h, lr, l2 in itertools.product(hidden, self.mlp_lr or [1e-2, 1e-3], self.mlp_l2 or [0.0, 1e-4, 1e-3])
        )
        gbt_grid = tuple(
            gbt.GbtConfig(n, eta, depth, lam, gamma, mcw, self.seed)
            for n, eta, depth, lam, gamma, mcw in itertools.product(
                self.gbt_rounds or [50, 200, 500], self.gbt_eta or [0.05, 0.1, 0.3], self.gbt_depth or [2, 3, 4],
                self.gbt_lambda or [0.0, 1.0], self.gbt_gamma or [0.0], self.gbt_min_child_weight or [1.0])
        )
        return evaluation.MatrixConfig(
            test_months=self.test_months, lags=self.lag_spec(), sarimax_grid=sar, exog_mode=self.exog_mode,
            mlp_grid=mlp_grid, mlp_val_months=self.mlp_val_months, gbt_grid=gbt_grid, gbt_folds=self.gbt_folds,
            mpr_recursive=self.mpr_recursive, explosion_factor=self.explosion_factor, seed=self.seed,
        )


# -- output ------------------------------------------------------------------------

class RunWriter:
    """Single serialized writer for one output directory.

    Each file is written to a temporary name and renamed into place; the
    SHA-256 of every file is kept for the run manifest.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.files: dict[str, str] = {}
        self._lock = threading.Lock()

    def write(self, relpath: str, emit) -> Path:
        target = self.root / relpath
        with self._lock:
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(target.name + ".partial")
            emit(tmp)
            os.replace(tmp, target)
            self.files[relpath] = hashlib.sha256(target.read_bytes()).hexdigest()
        return target

    def write_text(self, relpath: str, text: str) -> Path:
        return self.write(relpath, lambda p: p.write_text(text, encoding="utf-8"))


class StageFailure(ClimlagError):
    """Wraps an error with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: ClimlagError):
        super().__init__(f"[stage={stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


class _Stage:
    def __init__(self, name: str, timings: dict | None = None):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.timings is not None:
            self.timings[self.name] = self.timings.get(self.name, 0.0) + time.perf_counter() - self.t0
        if isinstance(exc, StageFailure):
            return False
        if isinstance(exc, ClimlagError):
            raise StageFailure(self.name, exc) from exc
        return False


# -- data access -------------------------------------------------------------------

def data_paths(cfg: RunConfig, division: str) -> tuple[Path, Path]:
    base = Path(cfg.data_dir)
    return base / f"{division}_cases.csv", base / f"{division}_climate.csv"


def load_divisions(cfg: RunConfig):
    if not cfg.division:
        raise ConfigError("no division configured (set 'division = ...' or pass --division)")
    panels = []
    for div in cfg.division:
        cases, climate = data_paths(cfg, div)
        for path in (cases, climate):
            if not path.is_file():
                raise ConfigError(f"input file {path} does not exist")
        panels.append(load_panel(cases, climate, div))
    return panels


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fetch_dataset(url: str, destination, divisions, timeout: float = 30.0) -> dict[str, dict]:
    """Download ``<division>_cases.csv`` and ``<division>_climate.csv`` from ``url``.

    Every file is schema-checked before it replaces the local copy, and a
    file whose content is unchanged is not rewritten. ``SHA256SUMS`` in the
    destination lists the digests. Returns ``{filename: {"sha256", "changed"}}``.
    """
    if not url:
        raise ConfigError("no fetch URL configured (set fetch_url or pass --url)")
    if not divisions:
        raise ConfigError("no division configured for fetch")
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    result = {}
    for div in divisions:
        for kind, reader in (("cases", read_cases_csv), ("climate", read_climate_csv)):
            name = f"{div}_{kind}.csv"
            src = url.rstrip("/") + "/" + urllib.parse.quote(name)
            try:
                with urllib.request.urlopen(src, timeout=timeout) as resp:
                    data = resp.read()
            except (urllib.error.URLError, OSError, ValueError) as exc:
                raise NetworkError(f"{src}: {exc}") from None
            fd, tmp_name = tempfile.mkstemp(prefix=".fetch-", suffix=".csv", dir=dest)
            tmp = Path(tmp_name)
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                try:
                    reader(tmp)
                except SchemaError as exc:
                    raise SchemaError(f"{src}: {exc}".replace(str(tmp), name)) from None
                digest = _sha256(data)
                target = dest / name
                changed = not (target.is_file() and _sha256(target.read_bytes()) == digest)
                if changed:
                    os.replace(tmp, target)
            finally:
                if tmp.exists():
                    tmp.unlink()
            result[name] = {"sha256": digest, "changed": changed}
        align_panel(read_cases_csv(dest / f"{div}_cases.csv"), read_climate_csv(dest / f"{div}_climate.csv"), div)
    sums_path = dest / "SHA256SUMS"
    known = {}
    if sums_path.is_file():
        for line in sums_path.read_text(encoding="utf-8").splitlines():
            digest, _, name = line.partition("  ")
            if name:
                known[name] = digest
    known.update({name: info["sha256"] for name, info in result.items()})
    text = "".join(f"{known[n]}  {n}\n" for n in sorted(known))
    if not sums_path.is_file() or sums_path.read_text(encoding="utf-8") != text:
        sums_path.write_text(text, encoding="utf-8")
    return result


# -- stage bodies ------------------------------------------------------------------

def stage_decompose(writer: RunWriter, panel, cfg: RunConfig) -> None:
    comp = stl_decompose(panel.cases.astype(float), 12, cfg.loess())
    writer.write(f"{panel.division}/stl.csv", lambda p: reports.write_stl_csv(p, panel.months, comp))


def stage_correlate(writer: RunWriter, panel, cfg: RunConfig) -> None:
    matrix = lagged_matrix(panel, cfg.max_lag)
    writer.write(f"{panel.division}/correlation.csv", lambda p: reports.write_correlation_csv(p, matrix))
    writer.write(f"{panel.division}/best_lags.csv", lambda p: reports.write_best_lags_csv(p, best_lags(matrix)))


def stage_diagnose(writer: RunWriter, panel, cfg: RunConfig) -> None:
    rho = acf(panel.cases.astype(float), cfg.acf_lags).values
    phi = pacf_from_acf(rho)
    writer.write(f"{panel.division}/diagnostics.csv", lambda p: reports.write_diagnostics_csv(p, rho, phi))


def check_split(panel, cfg: RunConfig) -> None:
    """Fail early if any requested design cannot be built or split."""
    lags = cfg.lag_spec()
    for set_name in cfg.feature_set:
        for variant in sorted(set(cfg.variant)):
            design = build_design(panel, feature_set(set_name), lags.with_case_lag(variant == 2))
            split_design(design, cfg.test_months)


def _cell_stem(rec) -> str:
    return f"{rec.label}_{rec.feature_set}"


GRID_HEADER = ("order", "rmse", "mae", "mape", "aic", "bic", "ljung_box_p", "status", "message")


def write_model_artifacts(writer: RunWriter, rec, prefix: str) -> None:
    """Forecast series plus a family-specific model file for one ok record."""
    if rec.status != "ok":
        return
    stem = f"{prefix}/{_cell_stem(rec)}"
    writer.write(f"{stem}_forecast.csv", lambda p: evaluation.write_forecast_csv(rec, p))
    model = rec.model
    if model is None:
        return
    if rec.family == "SARIMAX":
        num = lambda x: "" if x is None else float(x)
        rows = [(str(g.order), num(g.metrics and g.metrics.rmse), num(g.metrics and g.metrics.mae),
                 num(g.metrics.mape_pct if g.metrics else None), num(g.aic), num(g.bic), num(g.lb_p),
                 "ok" if g.ok else "failed", g.error or "") for g in model]
        writer.write(f"{stem}_grid.csv", lambda p: reports.write_rows(p, GRID_HEADER, rows))
    elif rec.family == "MPR":
        writer.write(f"{stem}_coefficients.csv", lambda p: reports.write_coefficients_csv(p, model))
    elif rec.family == "ANN":
        writer.write_text(f"{stem}_network.json", model.to_json() + "\n")
    elif rec.family == "XGB":
        writer.write_text(f"{stem}_ensemble.json", model.to_json() + "\n")
        writer.write(f"{stem}_importance.csv",
                     lambda p: reports.write_importance_csv(p, rec.columns, model.feature_importance()))


def write_evaluation(writer: RunWriter, records, prefix: str = "") -> evaluation.Selection | None:
    pre = f"{prefix}/" if prefix else ""
    writer.write(f"{pre}matrix.csv", lambda p: evaluation.write_matrix_csv(records, p))
    divisions = sorted({r.division for r in records})
    for div in divisions:
        writer.write(f"{div}/summary.csv", lambda p, d=div: evaluation.write_summary_csv(records, d, p))
    if not any(r.status == "ok" for r in records):
        return None
    selection = evaluation.select_best(records)
    writer.write(f"{pre}champions.csv", lambda p: evaluation.write_champions_csv(selection, p))
    for rec in selection.per_family.values():
        writer.write(f"{rec.division}/forecast_{_cell_stem(rec)}.csv",
                     lambda p, r=rec: evaluation.write_forecast_csv(r, p))
    for rec in selection.champions.values():
        writer.write(f"{rec.division}/forecast_champion.csv", lambda p, r=rec: evaluation.write_forecast_csv(r, p))
    return selection


def _progress(rec) -> None:
    extra = f"rmse={rec.metrics.rmse:.6g}" if rec.metrics else rec.message
    log.info("%s %s %s %s %s", rec.division, rec.label, rec.feature_set, rec.status, extra)


# -- commands ----------------------------------------------------------------------

def cmd_fixture(cfg: RunConfig, args) -> int:
    out = Path(args.out or cfg.data_dir)
    divisions = cfg.division or ["Dhaka", "Barishal"]
    for path in write_fixture(out, divisions, seed=cfg.seed):
        print(path)
    return 0


def cmd_fetch(cfg: RunConfig, args) -> int:
    with _Stage("fetch"):
        result = fetch_dataset(cfg.fetch_url, cfg.data_dir, cfg.division)
    for name, info in sorted(result.items()):
        print(f"{info['sha256']}  {name}  {'updated' if info['changed'] else 'unchanged'}")
    return 0


def _per_division(cfg: RunConfig, body) -> int:
    writer = RunWriter(cfg.output_dir)
    with _Stage("load"):
        panels = load_divisions(cfg)
    for panel in panels:
        body(writer, panel, cfg)
    for rel in sorted(writer.files):
        print(writer.root / rel)
    return 0


def cmd_decompose(cfg, args) -> int:
    return _per_division(cfg, lambda w, p, c: _staged("decompose", stage_decompose, w, p, c))


def cmd_correlate(cfg, args) -> int:
    return _per_division(cfg, lambda w, p, c: _staged("correlate", stage_correlate, w, p, c))


def cmd_diagnose(cfg, args) -> int:
    return _per_division(cfg, lambda w, p, c: _staged("diagnose", stage_diagnose, w, p, c))


def _staged(name, fn, *a):
    with _Stage(name):
        return fn(*a)


def cmd_fit(cfg: RunConfig, args) -> int:
    family = _family(args.family)
    mcfg = cfg.matrix_config()
    writer = RunWriter(cfg.output_dir)
    with _Stage("load"):
        panels = load_divisions(cfg)
    records = []
    for panel in panels:
        with _Stage("split"):
            check_split(panel, cfg)
        with _Stage("fit"):
            recs = evaluation.run_matrix(panel, [family], cfg.variant, cfg.feature_set, mcfg, progress=_progress)
        for rec in recs:
            write_model_artifacts(writer, rec, f"{panel.division}/fit_{family}")
        records += recs
    writer.write(f"fit_{family}_results.csv", lambda p: evaluation.write_matrix_csv(records, p))
    for rel in sorted(writer.files):
        print(writer.root / rel)
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        log.warning("%s %s %s %s: %s", r.division, r.label, r.feature_set, r.status, r.message)
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    writer = RunWriter(cfg.output_dir)
    with _Stage("load"):
        panels = load_divisions(cfg)
    for panel in panels:
        with _Stage("split"):
            check_split(panel, cfg)
    with _Stage("matrix"):
        records = evaluation.run_matrix(panels, cfg.family, cfg.variant, cfg.feature_set, cfg.matrix_config(),
                                        progress=_progress)
    with _Stage("select"):
        selection = write_evaluation(writer, records)
        if selection is None:
            evaluation.select_best(records)  # raises NoValidRecords
    _print_champions(selection)
    return 0


def _print_champions(selection) -> None:
    for div, rec in selection.champions.items():
        m = rec.metrics
        mape = "n/a" if m.mape_pct is None else f"{m.mape_pct:.2f}%"
        print(f"{div}: champion {rec.label} {rec.feature_set} {rec.hyperparameters} "
              f"rmse={m.rmse:.2f} mae={m.mae:.2f} mape={mape}")
    for rec in selection.excluded:
        print(f"{rec.division}: excluded {rec.label} {rec.feature_set} ({rec.status}: {rec.message})")


def run_pipeline(cfg: RunConfig, argv=None) -> dict:
    """All stages end to end; returns the run manifest (also written to disk)."""
    started = time.time()
    t0 = time.perf_counter()
    timings: dict = {}
    writer = RunWriter(cfg.output_dir)
    with _Stage("load", timings):
        panels = load_divisions(cfg)
    for panel in panels:
        with _Stage("split", timings):
            check_split(panel, cfg)
    for panel in panels:
        writer.write(f"{panel.division}/panel.csv", lambda p, pn=panel: write_panel_csv(pn, p))
        with _Stage("decompose", timings):
            stage_decompose(writer, panel, cfg)
        with _Stage("correlate", timings):
            stage_correlate(writer, panel, cfg)
        with _Stage("diagnostics", timings):
            stage_diagnose(writer, panel, cfg)
    with _Stage("matrix", timings):
        records = evaluation.run_matrix(panels, cfg.family, cfg.variant, cfg.feature_set, cfg.matrix_config(),
                                        progress=_progress)
        for rec in records:
            write_model_artifacts(writer, rec, f"{rec.division}/models")
    with _Stage("select", timings):
        selection = write_evaluation(writer, records)
        if selection is None:
            evaluation.select_best(records)
    writer.write_text("run.cfg", cfg.to_text())
    manifest = {
        "command": ["climlag", "pipeline"] if argv is None else list(argv),
        "config": cfg.to_text(),
        "seed": cfg.seed,
        "inputs": {
            str(path): hashlib.sha256(Path(path).read_bytes()).hexdigest()
            for div in cfg.division for path in data_paths(cfg, div)
        },
        "versions": _versions(),
        "started_unix": started,
        "wall_time_s": time.perf_counter() - t0,
        "stage_seconds": timings,
        "records": len(records),
        "champions": {d: f"{r.label} {r.feature_set} {r.hyperparameters}" for d, r in selection.champions.items()},
        "excluded": [f"{r.division} {r.label} {r.feature_set} {r.status}: {r.message}" for r in selection.excluded],
        "outputs": dict(sorted(writer.files.items())),
    }
    writer.write_text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _versions() -> dict:
    import numba
    import scipy

    return {"climlag": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def cmd_pipeline(cfg: RunConfig, args) -> int:
    manifest = run_pipeline(cfg, ["climlag"] + list(args.argv))
    print(f"{manifest['records']} records written to {cfg.output_dir}")
    for div, label in manifest["champions"].items():
        print(f"{div}: champion {label}")
    for line in manifest["excluded"]:
        print(f"excluded {line}")
    return 0


COMMANDS = {
    "fetch": cmd_fetch,
    "decompose": cmd_decompose,
    "correlate": cmd_correlate,
    "diagnose": cmd_diagnose,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "fixture": cmd_fixture,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="flat key = value configuration file")
    common.add_argument("--from-manifest", help="re-use the configuration recorded in a run manifest")
    common.add_argument("--division", action="append", help="division label (repeatable)")
    common.add_argument("--data-dir", help="directory holding <division>_cases.csv and <division>_climate.csv")
    common.add_argument("-o", "--output-dir", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--test-months", type=int)
    common.add_argument("--feature-set", action="append", help="SET1..SET4 (repeatable)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeat for list keys)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="climlag", description="Climate-lagged case-count forecasting toolkit")
    parser.add_argument("--version", action="version", version=f"climlag {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    p = sub.add_parser("fetch", parents=[common], help="download and validate the dataset")
    p.add_argument("--url", help="base URL serving <division>_cases.csv and <division>_climate.csv")
    sub.add_parser("decompose", parents=[common], help="STL decomposition of each case series")
    p = sub.add_parser("correlate", parents=[common], help="lagged climate/case correlations")
    p.add_argument("--max-lag", type=int)
    p = sub.add_parser("diagnose", parents=[common], help="ACF/PACF of each case series")
    p.add_argument("--acf-lags", type=int)
    p = sub.add_parser("fit", parents=[common], help="fit one model family on every requested feature set")
    p.add_argument("family", type=str.upper, choices=evaluation.FAMILIES)
    sub.add_parser("evaluate", parents=[common], help="model x feature-set matrix and champion selection")
    sub.add_parser("pipeline", parents=[common], help="every stage end to end, with a run manifest")
    p = sub.add_parser("fixture", parents=[common], help="write the bundled synthetic dataset")
    p.add_argument("--out", help="target directory (default: data_dir)")
    return parser


def resolve_config(args) -> RunConfig:
    """Manifest config, then config file, then flags; each source replaces the keys it sets."""
    cfg = RunConfig()
    if args.from_manifest:
        try:
            doc = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
            text = doc["config"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read manifest {args.from_manifest}: {exc}") from None
        cfg.update(parse_config_text(text, args.from_manifest))
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        cfg.update(parse_config_text(text, args.config))

    flags = []
    for key, value in (("division", args.division), ("feature_set", args.feature_set)):
        if value:
            flags += [(key, v) for v in value]
    for key, value in (("data_dir", args.data_dir), ("output_dir", args.output_dir), ("seed", args.seed),
                       ("test_months", args.test_months), ("fetch_url", getattr(args, "url", None)),
                       ("max_lag", getattr(args, "max_lag", None)), ("acf_lags", getattr(args, "acf_lags", None))):
        if value is not None:
            flags.append((key, str(value)))
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        flags.append((key, value))
    cfg.update(flags)
    return cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit with status 2
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ClimlagError as exc:
        print(f"climlag: error: {exc}" if isinstance(exc, StageFailure)
              else f"climlag: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
