"""Evaluation orchestration and report rendering.

A report is a plain JSON-able dict. JSON is the canonical, lossless form;
markdown and CSV are derived views for reading and plotting.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_EVEN, Decimal

import numpy as np

from . import __version__
from .dataset import file_sha256, load_code_tensor, load_dataset_dir, load_factor_table, validate_pairing
from .discretize import BinningSpec, PoolingSpec, bin_pooled, discretize_pending_factors, pool_time_axis
from .errors import UndefinedMetric, ValidationError
from .information import dataset_mean, dimension_cells, jemmig, mi_matrix, mig
from .irs import SCALE_NAME, build_plan, irs_details
from .predictor import TrainConfig, encode_labels, explicitness, split_covering_classes
from .probe import emit_accuracy_trend, probe_factor
from .seeding import ALL_DIMS, derive_seed

log = logging.getLogger(__name__)

ENGINE = "disentangle-eval"
COLUMNS = ("mig", "jemmig", "jemmig_raw", "irs", "irs_raw", "explicitness")
# columns that get a best-cell marker, with the direction that counts as best
BEST = {"mig": max, "jemmig": max, "jemmig_raw": min, "irs": max, "explicitness": max}
ALL = "All"


@dataclass(frozen=True)
class RunConfig:
    """Every knob of an eval or probe run, with resolved defaults."""

    data: str | None = None
    factors_csv: str | None = None
    codes: str | None = None
    factors: tuple[str, ...] | None = None
    pooling: str = "mean"
    binning: str = "uniform"
    code_bins: int = 20
    factor_binning: str = "quantile"
    factor_bins: int = 10
    irs_min_group: int = 2
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.05
    l2: float = 1e-4
    split_seed: int | None = None
    seed: int = 0
    runs: int = 5
    engine_version: str = field(default=__version__)

    def __post_init__(self):
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(self.factors))
        if self.irs_min_group < 1:
            raise ValidationError("irs_min_group must be >= 1")
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        # validate the derived specs eagerly
        self.pooling_spec, self.code_binning, self.factor_binning_spec, self.train_config

    @property
    def pooling_spec(self):
        return PoolingSpec(self.pooling)

    @property
    def code_binning(self):
        return BinningSpec(self.binning, self.code_bins)

    @property
    def factor_binning_spec(self):
        return BinningSpec(self.factor_binning, self.factor_bins)

    @property
    def train_config(self):
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.l2)

    def to_json(self):
        out = asdict(self)
        out["factors"] = None if self.factors is None else list(self.factors)
        return out

    @classmethod
    def from_json(cls, obj):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

def load_inputs(config):
    """Resolve the config's input paths; returns ``(dataset, provenance)``."""
    if config.data:
        manifest, ft, ct = load_dataset_dir(config.data)
        names = config.factors or manifest.eval_factors
        provenance = {
            "manifest_sha256": file_sha256(os.path.join(config.data, "manifest.json")),
            "name": manifest.name,
            "version_tag": manifest.version_tag,
        }
    elif config.factors_csv and config.codes:
        ft = load_factor_table(config.factors_csv)
        ct = load_code_tensor(config.codes)
        names = config.factors
        provenance = {"manifest_sha256": None, "name": os.path.basename(config.factors_csv),
                      "version_tag": None}
    else:
        raise ValidationError("give either a dataset directory or both a factor CSV and codes")
    if names:
        ft = ft.select(names)
    return validate_pairing(ft, ct), provenance


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _cell(row, column, fn):
    try:
        row[column] = fn()
    except UndefinedMetric as exc:
        row[column] = None
        row["null_reasons"][column] = exc.reason


def _empty_rows(d):
    rows = [{"dimension": j, **{c: None for c in COLUMNS}, "null_reasons": {}} for j in range(d)]
    rows.append({"dimension": ALL, **{c: None for c in COLUMNS}, "null_reasons": {}})
    return rows


def _null_all(rows, columns, reason):
    for row in rows:
        for c in columns:
            row[c] = None
            row["null_reasons"][c] = reason


def best_cells(rows):
    """Index of the best dimension row per marked column (lowest index on ties).

    The "All" row is excluded; columns with no defined cell get None.
    """
    out = {}
    dims = [r for r in rows if r["dimension"] != ALL]
    for col, pick in BEST.items():
        vals = [(r[col], r["dimension"]) for r in dims if r[col] is not None]
        if not vals:
            out[col] = None
            continue
        target = pick(v for v, _ in vals)
        out[col] = min(j for v, j in vals if v == target)
    return out


def _info_cells(dataset, binned, mi, i, rows):
    d = binned.n_dims
    if d < 2:
        _null_all(rows, ("mig", "jemmig", "jemmig_raw"), "fewer than two dimensions")
        return
    share, raw, norm = dimension_cells(dataset, binned, mi, i)
    for j in range(d):
        rows[j]["mig"] = float(share[j])
        rows[j]["jemmig_raw"] = float(raw[j])
        rows[j]["jemmig"] = float(norm[j])
    rows[d]["mig"] = mig(mi, i)
    rows[d]["jemmig_raw"], rows[d]["jemmig"] = jemmig(dataset, binned, mi, i)


def _irs_cells(dataset, pooled, i, rows, config):
    try:
        plan = build_plan(dataset, i, config.irs_min_group)
    except UndefinedMetric as exc:
        _null_all(rows, ("irs", "irs_raw"), exc.reason)
        return None
    d = pooled.shape[1]
    for j, row in enumerate(rows):
        res = irs_details(dataset, pooled, i, None if j == d else [j], plan=plan)
        row["irs"], row["irs_raw"] = res.score, res.raw
    return {"usable_cells": int(plan.cell_usable.sum()), "observed_cells": plan.n_cells_total,
            "coverage": plan.coverage, "min_group_size": plan.min_group_size}


def _explicitness_cells(dataset, codes, i, rows, config):
    y, classes = encode_labels(dataset.factors.column(i))
    if len(classes) < 2:
        _null_all(rows, ("explicitness",), "single class")
        return
    split_seed = derive_seed(config.seed if config.split_seed is None else config.split_seed,
                             "explicitness-split", i)
    try:
        split = split_covering_classes(y, split_seed)
    except UndefinedMetric as exc:
        _null_all(rows, ("explicitness",), exc.reason)
        return
    d = codes.n_dims
    for j, row in enumerate(rows):
        scope = None if j == d else [j]
        cfg = config.train_config.with_seed(
            derive_seed(config.seed, "explicitness-init", i, ALL_DIMS if scope is None else j))
        res = explicitness(dataset, codes, i, scope, config=cfg, split=split)
        row["explicitness"] = res.score


def evaluate(dataset, config=RunConfig(), provenance=None, timings=None):
    """Run all four metric families on a paired dataset; returns the report dict."""
    timings = {} if timings is None else timings
    ft = discretize_pending_factors(dataset.factors, config.factor_binning_spec)
    dataset = validate_pairing(ft, dataset.codes)
    codes = dataset.codes

    t0 = time.perf_counter()
    pooled = pool_time_axis(codes, config.pooling_spec)
    binned = bin_pooled(pooled, config.code_binning)
    mi = mi_matrix(dataset, binned)
    timings["mi_matrix"] = time.perf_counter() - t0
    log.info("MI matrix (%d x %d) in %.2fs", *mi.shape, timings["mi_matrix"])

    factors = []
    for i, name in enumerate(ft.factor_names):
        rows = _empty_rows(codes.n_dims)
        entry = {"name": name, "cardinality": ft.cardinalities[i],
                 "entropy_bits": float(mi.factor_entropies[i]), "irs_coverage": None}
        if mi.factor_entropies[i] <= 0.0:
            _null_all(rows, COLUMNS, "zero entropy")
        else:
            t0 = time.perf_counter()
            _info_cells(dataset, binned, mi, i, rows)
            t1 = time.perf_counter()
            entry["irs_coverage"] = _irs_cells(dataset, pooled, i, rows, config)
            t2 = time.perf_counter()
            _explicitness_cells(dataset, codes, i, rows, config)
            t3 = time.perf_counter()
            timings[f"{name}/information"] = t1 - t0
            timings[f"{name}/irs"] = t2 - t1
            timings[f"{name}/explicitness"] = t3 - t2
            log.info("factor %s: info %.2fs, irs %.2fs, explicitness %.2fs",
                     name, t1 - t0, t2 - t1, t3 - t2)
        entry["rows"] = rows
        entry["best"] = best_cells(rows)
        factors.append(entry)

    summary = {c: dataset_mean([f["rows"][-1][c] for f in factors])
               for c in ("mig", "jemmig", "irs", "explicitness")}
    return {
        "engine": {"name": ENGINE, "version": __version__},
        "config": config.to_json(),
        "dataset": {
            **(provenance or {}),
            "n_samples": dataset.n_samples,
            "n_dims": codes.n_dims,
            "seq_len": codes.seq_len,
            "effective_code_bins": [int(b) for b in binned.effective_bins],
            "log_base": 2,
            "irs_scale": SCALE_NAME,
        },
        "summary": summary,
        "factors": factors,
    }


def run_eval(config, timings=None):
    dataset, provenance = load_inputs(config)
    return evaluate(dataset, config, provenance, timings)


def run_probe(config, trend_dir=None):
    """Probe every selected factor; optionally write one trend CSV per factor."""
    dataset, provenance = load_inputs(config)
    ft = discretize_pending_factors(dataset.factors, config.factor_binning_spec)
    dataset = validate_pairing(ft, dataset.codes)
    results = []
    for i, name in enumerate(ft.factor_names):
        res = probe_factor(dataset, dataset.codes, i, config.runs, config.train_config, config.seed)
        if trend_dir is not None:
            os.makedirs(trend_dir, exist_ok=True)
            emit_accuracy_trend(res, os.path.join(trend_dir, f"probe_{name}.csv"))
        results.append(res.to_json())
    return {
        "engine": {"name": ENGINE, "version": __version__},
        "config": config.to_json(),
        "dataset": {**provenance, "n_samples": dataset.n_samples,
                    "n_dims": dataset.codes.n_dims, "seq_len": dataset.codes.seq_len},
        "probes": results,
    }


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

def dumps(report):
    """Canonical JSON text: sorted keys, full float precision."""
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def fmt6(x):
    """Six decimals, round-half-even, on the shortest repr of ``x``."""
    if x is None:
        return "—"
    return str(Decimal(repr(float(x))).quantize(Decimal("0.000001"), rounding=ROUND_HALF_EVEN))


_HEADINGS = {"mig": "MIG ↑", "jemmig": "JEMMIG (norm.) ↑", "jemmig_raw": "JEMMIG (raw) ↓",
             "irs": "IRS ↑", "explicitness": "Explicitness ↑"}


def to_markdown(report):
    cfg = report["config"]
    lines = [f"# Disentanglement report: {report['dataset'].get('name')}", ""]
    lines.append(
        f"N = {report['dataset']['n_samples']}, d = {report['dataset']['n_dims']}, "
        f"T = {report['dataset']['seq_len']}; pooling = {cfg['pooling']}, "
        f"code bins = {cfg['code_bins']} ({cfg['binning']}), seed = {cfg['seed']}")
    lines.append("")
    lines.append("| Metric | Dataset score |")
    lines.append("|---|---|")
    for k, v in report["summary"].items():
        lines.append(f"| {k} | {fmt6(v)} |")
    for f in report["factors"]:
        lines += ["", f"## {f['name']}", ""]
        cols = list(_HEADINGS)
        lines.append("| Dimension | " + " | ".join(_HEADINGS[c] for c in cols) + " |")
        lines.append("|---" * (len(cols) + 1) + "|")
        for row in f["rows"]:
            cells = []
            for c in cols:
                text = fmt6(row[c])
                if f["best"].get(c) is not None and f["best"][c] == row["dimension"]:
                    text = f"**{text}**"
                cells.append(text)
            lines.append(f"| {row['dimension']} | " + " | ".join(cells) + " |")
        reasons = sorted({r for row in f["rows"] for r in row["null_reasons"].values()})
        if reasons:
            lines += ["", "Undefined cells: " + ", ".join(reasons)]
    return "\n".join(lines) + "\n"


def render_report(report, fmt, path):
    """Write ``report`` as json, markdown or csv; returns the written paths.

    CSV produces one file per factor next to ``path``, named
    ``<stem>_<factor>.csv``.
    """
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(report))
        return [path]
    if fmt == "markdown":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(to_markdown(report))
        return [path]
    if fmt == "csv":
        stem = os.path.splitext(path)[0]
        written = []
        for f in report["factors"]:
            out = f"{stem}_{f['name']}.csv"
            with open(out, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("dimension",) + COLUMNS)
                for row in f["rows"]:
                    w.writerow([row["dimension"]] + ["" if row[c] is None else repr(row[c])
                                                     for c in COLUMNS])
            written.append(out)
        return written
    raise ValidationError(f"unknown report format {fmt!r}")


def as_float_array(report, factor, column):
    """Column of a factor table as floats (NaN for nulls); handy in notebooks."""
    f = next(x for x in report["factors"] if x["name"] == factor)
    return np.array([np.nan if r[column] is None else r[column] for r in f["rows"]])
