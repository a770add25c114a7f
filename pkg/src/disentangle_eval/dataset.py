"""Core data types and file I/O for factor tables, latent codes and manifests.

File formats
------------
Factor CSV
    UTF-8, header row, comma separated, one row per sample.
Code tensor (``.bin``)
    Little-endian. ``b"DSLC"`` magic, ``u32`` version (1), ``u64`` N,
    ``u32`` d, ``u32`` T, then ``N*d*T`` float32 values in (sample, dim, time)
    row-major order. A plain CSV (one row per sample, one column per
    dimension) is accepted as a fallback and yields ``T = 1``.
Manifest
    JSON document describing a dataset directory (see `DatasetManifest`).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

MAGIC = b"DSLC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")

# Speakers x contents x styles of the three released dataset versions.
VERSION_GRIDS = {
    "small": (("speaker_id", 50), ("content_id", 500), ("speaking_style", 1)),
    "medium": (("speaker_id", 25), ("content_id", 500), ("speaking_style", 4)),
    "large": (("speaker_id", 249), ("content_id", 110), ("speaking_style", 4)),
}
VERSION_TOTALS = {"small": 25000, "medium": 50000, "large": 109560}
VERSION_TAGS = ("small", "medium", "large", "custom")


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FactorTable:
    """Ground-truth factors, one integer-coded column per factor.

    Continuous factors that have not been discretized yet keep their raw
    values in ``continuous_sources`` and hold a placeholder all-zero column
    with cardinality 1 until `with_factor` installs a binned version.
    """

    factors: np.ndarray
    factor_names: tuple[str, ...]
    cardinalities: tuple[int, ...]
    label_maps: tuple[tuple[str, ...] | None, ...] | None = None
    continuous_sources: tuple[np.ndarray | None, ...] | None = None

    def __post_init__(self):
        f = np.asarray(self.factors)
        if f.ndim != 2:
            raise ValidationError(f"factors must be a 2-D matrix, got shape {f.shape}")
        if not np.issubdtype(f.dtype, np.integer):
            raise ValidationError("factors must be integer category indices")
        n, m = f.shape
        if m < 1:
            raise ValidationError("at least one factor column is required")
        names = tuple(self.factor_names)
        cards = tuple(int(c) for c in self.cardinalities)
        if len(names) != m or len(cards) != m:
            raise ValidationError("factor_names and cardinalities must have one entry per column")
        if any(not nm for nm in names) or len(set(names)) != m:
            raise ValidationError(f"factor names must be unique and non-empty: {names}")
        for k, c in enumerate(cards):
            if c < 1:
                raise ValidationError(f"cardinality of {names[k]!r} must be >= 1, got {c}")
            if n and (f[:, k].min() < 0 or f[:, k].max() >= c):
                raise ValidationError(
                    f"factor {names[k]!r} has entries outside [0, {c})")
        object.__setattr__(self, "factors", _frozen(f.astype(np.int64, copy=False)))
        object.__setattr__(self, "factor_names", names)
        object.__setattr__(self, "cardinalities", cards)
        if self.label_maps is not None:
            maps = tuple(None if lm is None else tuple(str(s) for s in lm)
                         for lm in self.label_maps)
            if len(maps) != m:
                raise ValidationError("label_maps must have one entry per factor")
            object.__setattr__(self, "label_maps", maps)
        if self.continuous_sources is not None:
            srcs = []
            for k, src in enumerate(self.continuous_sources):
                if src is None:
                    srcs.append(None)
                    continue
                src = np.asarray(src, dtype=np.float64)
                if src.shape != (n,):
                    raise ValidationError(
                        f"continuous source for {names[k]!r} must have length {n}")
                if not np.all(np.isfinite(src)):
                    raise ValidationError(f"continuous source for {names[k]!r} is not finite")
                srcs.append(_frozen(src))
            if len(srcs) != m:
                raise ValidationError("continuous_sources must have one entry per factor")
            object.__setattr__(self, "continuous_sources", tuple(srcs))

    @property
    def n_samples(self):
        return self.factors.shape[0]

    @property
    def n_factors(self):
        return self.factors.shape[1]

    def index(self, name):
        try:
            return self.factor_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown factor {name!r}; have {list(self.factor_names)}") from None

    def column(self, k):
        return self.factors[:, k]

    def pending_continuous(self):
        """Indices of continuous factors still awaiting discretization."""
        if self.continuous_sources is None:
            return []
        return [k for k, s in enumerate(self.continuous_sources) if s is not None]

    def with_factor(self, k, column, cardinality):
        """Return a copy with column ``k`` replaced and its raw source dropped."""
        f = np.array(self.factors)
        f[:, k] = column
        cards = list(self.cardinalities)
        cards[k] = int(cardinality)
        srcs = None
        if self.continuous_sources is not None:
            srcs = list(self.continuous_sources)
            srcs[k] = None
            if all(s is None for s in srcs):
                srcs = None
        maps = None
        if self.label_maps is not None:
            maps = list(self.label_maps)
            maps[k] = None
        return FactorTable(f, self.factor_names, cards, maps, srcs)

    def select(self, names):
        """Restrict the table to the named factors, in the given order."""
        idx = [self.index(nm) for nm in names]
        maps = None if self.label_maps is None else [self.label_maps[k] for k in idx]
        srcs = None if self.continuous_sources is None else [self.continuous_sources[k] for k in idx]
        return FactorTable(self.factors[:, idx], [self.factor_names[k] for k in idx],
                           [self.cardinalities[k] for k in idx], maps, srcs)


@dataclass(frozen=True)
class CodeTensor:
    """Latent codes of shape (N, d, T), float32, all finite."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ValidationError(f"codes must be 3-D (N, d, T), got shape {v.shape}")
        if 0 in v.shape[1:]:
            raise ValidationError(f"zero-sized axis in code shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("codes contain non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_dims(self):
        return self.values.shape[1]

    @property
    def seq_len(self):
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PairedDataset:
    """Factor table and code tensor known to describe the same samples.

    Build it with `validate_pairing`; metric functions accept nothing else.
    """

    factors: FactorTable
    codes: CodeTensor

    @property
    def n_samples(self):
        return self.factors.n_samples


def validate_pairing(ft, ct):
    if ft.n_samples != ct.n_samples:
        raise ValidationError(
            f"sample-count mismatch: factor table has {ft.n_samples} rows, "
            f"code tensor has {ct.n_samples} samples")
    if ft.n_samples == 0:
        raise ValidationError("empty dataset")
    return PairedDataset(ft, ct)


# --------------------------------------------------------------------------
# Factor CSV
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IngestionConfig:
    """How to interpret the columns of a factor CSV.

    Attributes:
      continuous: names of real-valued columns kept raw for later binning.
      cardinalities: per-column overrides; must cover the observed indices.
      label_maps: per-column index -> label tables. When given, string cells
        are looked up in the table instead of being assigned indices in
        first-occurrence order.
      columns: optional subset of columns to load (default: all).
    """

    continuous: frozenset = frozenset()
    cardinalities: Mapping[str, int] = field(default_factory=dict)
    label_maps: Mapping[str, Sequence[str]] = field(default_factory=dict)
    columns: tuple[str, ...] | None = None

    def to_json(self):
        return {
            "continuous": sorted(self.continuous),
            "cardinalities": dict(sorted(self.cardinalities.items())),
            "label_maps": {k: list(v) for k, v in sorted(self.label_maps.items())},
            "columns": None if self.columns is None else list(self.columns),
        }

    @classmethod
    def from_json(cls, obj):
        obj = obj or {}
        cols = obj.get("columns")
        return cls(
            continuous=frozenset(obj.get("continuous", ())),
            cardinalities={k: int(v) for k, v in obj.get("cardinalities", {}).items()},
            label_maps={k: tuple(v) for k, v in obj.get("label_maps", {}).items()},
            columns=None if cols is None else tuple(cols),
        )


def _parse_int(cell):
    try:
        return int(cell)
    except ValueError:
        return None


def _categorical_column(name, cells, config):
    """Map raw CSV cells of one column to (indices, cardinality, labels)."""
    label_map = config.label_maps.get(name)
    ints = [_parse_int(c) for c in cells]
    if label_map is None and all(i is not None for i in ints):
        col = np.asarray(ints, dtype=np.int64)
        if col.size and col.min() < 0:
            raise ValidationError(f"column {name!r} has negative category indices")
        card = int(col.max()) + 1 if col.size else 1
        labels = None
    elif label_map is not None:
        lookup = {lab: i for i, lab in enumerate(label_map)}
        col = np.empty(len(cells), dtype=np.int64)
        for r, c in enumerate(cells):
            if c in lookup:
                col[r] = lookup[c]
            elif ints[r] is not None and 0 <= ints[r] < len(label_map):
                col[r] = ints[r]
            else:
                raise ValidationError(f"column {name!r}: label {c!r} not in label map")
        card = len(label_map)
        labels = tuple(label_map)
    else:
        lookup = {}
        for c in cells:
            lookup.setdefault(c, len(lookup))
        col = np.fromiter((lookup[c] for c in cells), dtype=np.int64, count=len(cells))
        card = max(len(lookup), 1)
        labels = tuple(lookup)
    declared = config.cardinalities.get(name)
    if declared is not None:
        if col.size and declared <= int(col.max()):
            raise ValidationError(
                f"declared cardinality {declared} for {name!r} is smaller than "
                f"observed max index {int(col.max())}")
        card = int(declared)
    return col, card, labels


def load_factor_table(path, schema=None):
    """Read a factor CSV into a validated `FactorTable`.

    Integer columns are taken as category indices (cardinality = max + 1);
    other categorical columns get dense indices in first-occurrence order.
    Columns listed in ``schema.continuous`` must hold finite reals and are
    stored raw in ``continuous_sources``.
    """
    config = schema or IngestionConfig()
    if not os.path.exists(path):
        raise FileNotFoundError(f"factor table not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file, header row required") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{lineno}: ragged row ({len(row)} fields, header has {len(header)})")
            rows.append([c.strip() for c in row])

    wanted = list(config.columns) if config.columns is not None else header
    missing = [c for c in list(wanted) + sorted(config.continuous) if c not in header]
    if missing:
        raise ValidationError(f"{path}: columns not found: {missing}")

    n = len(rows)
    cols, cards, labels, sources = [], [], [], []
    for name in wanted:
        j = header.index(name)
        cells = [r[j] for r in rows]
        if name in config.continuous:
            try:
                raw = np.asarray([float(c) for c in cells], dtype=np.float64)
            except ValueError as exc:
                raise ValidationError(f"column {name!r}: {exc}") from None
            if not np.all(np.isfinite(raw)):
                raise ValidationError(f"column {name!r}: non-finite continuous value")
            cols.append(np.zeros(n, dtype=np.int64))
            cards.append(1)
            labels.append(None)
            sources.append(raw)
        else:
            col, card, lab = _categorical_column(name, cells, config)
            cols.append(col)
            cards.append(card)
            labels.append(lab)
            sources.append(None)
    factors = np.stack(cols, axis=1) if n else np.zeros((0, len(wanted)), dtype=np.int64)
    return FactorTable(
        factors, wanted, cards,
        labels if any(lab is not None for lab in labels) else None,
        sources if any(s is not None for s in sources) else None,
    )


def save_factor_table(ft, path):
    """Write ``ft`` as CSV and return the `IngestionConfig` that reloads it exactly.

    Categorical cells are written as integer indices; label maps and
    cardinalities travel in the returned config (stored in the manifest).
    Continuous sources are written with ``repr`` so float64 values survive.
    """
    pending = set(ft.pending_continuous())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ft.factor_names)
        cols = []
        for k in range(ft.n_factors):
            if k in pending:
                cols.append([repr(float(x)) for x in ft.continuous_sources[k]])
            else:
                cols.append([str(int(x)) for x in ft.factors[:, k]])
        w.writerows(zip(*cols))
    maps = {}
    if ft.label_maps is not None:
        maps = {ft.factor_names[k]: lm for k, lm in enumerate(ft.label_maps) if lm is not None}
    return IngestionConfig(
        continuous=frozenset(ft.factor_names[k] for k in pending),
        cardinalities={ft.factor_names[k]: c for k, c in enumerate(ft.cardinalities)
                       if k not in pending},
        label_maps=maps,
    )


# --------------------------------------------------------------------------
# Code tensors
# --------------------------------------------------------------------------

def save_code_tensor(ct, path):
    n, d, t = ct.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, d, t))
        fh.write(np.ascontiguousarray(ct.values, dtype="<f4").tobytes())


def _load_code_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header row
    if not rows:
        raise ValidationError(f"{path}: zero-sized axis (no data rows)")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValidationError(f"{path}: ragged rows")
    try:
        arr = np.asarray([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{path}: non-finite values")
    return CodeTensor(arr[:, :, None].astype(np.float32))


def load_code_tensor(path):
    """Load a `CodeTensor` from the binary format, or from CSV (``T = 1``)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"code tensor not found: {path}")
    if str(path).lower().endswith(".csv"):
        return _load_code_csv(path)
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < 4 or head[:4] != MAGIC:
        raise ValidationError(f"{path}: bad magic, expected {MAGIC!r}")
    if len(head) < _HEADER.size:
        raise ValidationError(f"{path}: truncated header")
    _, version, n, d, t = _HEADER.unpack(head)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported format version {version}")
    if n == 0 or d == 0 or t == 0:
        raise ValidationError(f"{path}: zero-sized axis in shape ({n}, {d}, {t})")
    expected = n * d * t * 4
    payload = size - _HEADER.size
    if payload < expected:
        raise ValidationError(
            f"{path}: truncated payload ({payload} bytes, expected {expected})")
    if payload > expected:
        raise ValidationError(
            f"{path}: trailing bytes ({payload} bytes, expected {expected})")
    values = np.fromfile(path, dtype="<f4", count=n * d * t, offset=_HEADER.size)
    try:
        return CodeTensor(values.reshape(n, d, t).astype(np.float32, copy=False))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetManifest:
    """Description of a dataset directory.

    ``factor_grid`` lists the crossed generative factors as (name,
    cardinality) pairs; derived factors (e.g. gender as a function of
    speaker) are not part of the grid.
    """

    name: str
    version_tag: str
    factor_grid: tuple[tuple[str, int], ...]
    total_utterances: int
    factors_path: str
    codes_path: str
    grid_complete: bool = True
    seed: int | None = None
    generator_hash: str | None = None
    factor_schema: dict | None = None
    eval_factors: tuple[str, ...] | None = None
    extra: dict | None = None

    def __post_init__(self):
        grid = tuple((str(nm), int(c)) for nm, c in self.factor_grid)
        object.__setattr__(self, "factor_grid", grid)
        if self.eval_factors is not None:
            object.__setattr__(self, "eval_factors", tuple(self.eval_factors))
        if self.version_tag not in VERSION_TAGS:
            raise ValidationError(f"version_tag must be one of {VERSION_TAGS}")
        if self.version_tag != "custom" and grid != VERSION_GRIDS[self.version_tag]:
            raise ValidationError(
                f"{self.version_tag} grid must be {VERSION_GRIDS[self.version_tag]}, got {grid}")
        if self.grid_complete and self.total_utterances != grid_total(grid):
            raise ValidationError(
                f"total_utterances {self.total_utterances} != grid product {grid_total(grid)}")

    def to_json(self):
        return {
            "name": self.name,
            "version_tag": self.version_tag,
            "factor_grid": [{"name": nm, "cardinality": c} for nm, c in self.factor_grid],
            "total_utterances": self.total_utterances,
            "grid_complete": self.grid_complete,
            "files": {"factors": self.factors_path, "codes": self.codes_path},
            "creation": {"seed": self.seed, "generator_hash": self.generator_hash},
            "factor_schema": self.factor_schema,
            "eval_factors": None if self.eval_factors is None else list(self.eval_factors),
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, obj):
        creation = obj.get("creation") or {}
        return cls(
            name=obj["name"],
            version_tag=obj["version_tag"],
            factor_grid=[(g["name"], g["cardinality"]) for g in obj["factor_grid"]],
            total_utterances=int(obj["total_utterances"]),
            factors_path=obj["files"]["factors"],
            codes_path=obj["files"]["codes"],
            grid_complete=bool(obj.get("grid_complete", True)),
            seed=creation.get("seed"),
            generator_hash=creation.get("generator_hash"),
            factor_schema=obj.get("factor_schema"),
            eval_factors=obj.get("eval_factors"),
            extra=obj.get("extra"),
        )


def grid_total(grid):
    return math.prod(c for _, c in grid)


def write_manifest(manifest, path):
    text = json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return DatasetManifest.from_json(json.load(fh))


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_dataset_dir(directory, manifest_name="manifest.json"):
    """Load the manifest, factor table and codes of a dataset directory."""
    mpath = os.path.join(directory, manifest_name)
    manifest = read_manifest(mpath)
    schema = IngestionConfig.from_json(manifest.factor_schema)
    ft = load_factor_table(os.path.join(directory, manifest.factors_path), schema)
    ct = load_code_tensor(os.path.join(directory, manifest.codes_path))
    return manifest, ft, ct
