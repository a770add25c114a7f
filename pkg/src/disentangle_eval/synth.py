"""Synthetic (factor, code) datasets with known disentanglement structure.

Factors are drawn over a grid; each code dimension at each time step is a
weighted sum of factor values rescaled to [-1, 1], plus Gaussian noise, then
an optional nonlinearity. A dimension may also carry pattern terms: each
level of the factor gets a fixed seeded temporal signature (unit RMS over
time) that is added along the sequence. Derived factors (gender as a fixed function of the
speaker) are computed from a seeded lookup table.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    VERSION_GRIDS,
    CodeTensor,
    DatasetManifest,
    FactorTable,
    save_code_tensor,
    save_factor_table,
    write_manifest,
)
from .errors import ValidationError

NONLINEARITIES = ("none", "tanh", "quantize")
QUANT_LEVELS = 8


@dataclass(frozen=True)
class FactorSpec:
    name: str
    cardinality: int


@dataclass(frozen=True)
class DerivedFactorSpec:
    """A factor that is a total function of ``source`` (balanced, seeded)."""

    name: str
    source: str
    cardinality: int = 2
    labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class DimRecipe:
    terms: tuple[tuple[str, float], ...] = ()
    sigma: float = 0.0
    nonlinearity: str = "none"
    patterns: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((str(n), float(w)) for n, w in self.terms))
        object.__setattr__(self, "patterns",
                           tuple((str(n), float(w)) for n, w in self.patterns))
        if not all(math.isfinite(w) for _, w in self.terms + self.patterns):
            raise ValidationError("mixing weights must be finite")
        if not self.sigma >= 0:
            raise ValidationError("sigma must be >= 0")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValidationError(f"nonlinearity must be one of {NONLINEARITIES}")


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    factors: tuple[FactorSpec, ...]
    dims: tuple[DimRecipe, ...]
    seq_len: int = 1
    derived: tuple[DerivedFactorSpec, ...] = ()
    n_samples: int | None = None
    grid_complete: bool = True
    seed: int = 0
    version_tag: str = "custom"
    eval_factors: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.factors:
            raise ValidationError("at least one factor is required")
        if any(f.cardinality < 1 for f in self.factors):
            raise ValidationError("grid cardinalities must be >= 1")
        if self.seq_len < 1 or not self.dims:
            raise ValidationError("need seq_len >= 1 and at least one code dimension")
        names = self.factor_names
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate factor names: {names}")
        for dv in self.derived:
            if dv.source not in names:
                raise ValidationError(f"derived factor {dv.name!r} has unknown source {dv.source!r}")
        for j, dim in enumerate(self.dims):
            for nm, _ in dim.terms + dim.patterns:
                if nm not in names:
                    raise ValidationError(f"dimension {j} mixes unknown factor {nm!r}")

    @property
    def factor_names(self):
        return [f.name for f in self.factors] + [d.name for d in self.derived]

    @property
    def grid(self):
        return tuple((f.name, f.cardinality) for f in self.factors)

    @property
    def grid_total(self):
        return math.prod(f.cardinality for f in self.factors)

    @property
    def total(self):
        return self.grid_total if self.n_samples is None else int(self.n_samples)

    def to_json(self):
        return {
            "name": self.name,
            "version_tag": self.version_tag,
            "seed": self.seed,
            "seq_len": self.seq_len,
            "n_samples": self.n_samples,
            "grid_complete": self.grid_complete,
            "factors": [{"name": f.name, "cardinality": f.cardinality} for f in self.factors],
            "derived": [{"name": d.name, "source": d.source, "cardinality": d.cardinality,
                         "labels": None if d.labels is None else list(d.labels)}
                        for d in self.derived],
            "dims": [{"terms": [[n, w] for n, w in r.terms], "sigma": r.sigma,
                      "nonlinearity": r.nonlinearity,
                      "patterns": [[n, w] for n, w in r.patterns]} for r in self.dims],
            "eval_factors": None if self.eval_factors is None else list(self.eval_factors),
        }

    @classmethod
    def from_json(cls, obj):
        derived = []
        for d in obj.get("derived", []):
            labels = d.get("labels")
            derived.append(DerivedFactorSpec(d["name"], d["source"], int(d.get("cardinality", 2)),
                                             None if labels is None else tuple(labels)))
        ev = obj.get("eval_factors")
        return cls(
            name=obj.get("name", "custom"),
            factors=tuple(FactorSpec(f["name"], int(f["cardinality"])) for f in obj["factors"]),
            dims=tuple(DimRecipe(tuple(tuple(t) for t in r.get("terms", [])),
                                 float(r.get("sigma", 0.0)), r.get("nonlinearity", "none"),
                                 tuple(tuple(t) for t in r.get("patterns", [])))
                       for r in obj["dims"]),
            seq_len=int(obj.get("seq_len", 1)),
            derived=tuple(derived),
            n_samples=obj.get("n_samples"),
            grid_complete=bool(obj.get("grid_complete", True)),
            seed=int(obj.get("seed", 0)),
            version_tag=obj.get("version_tag", "custom"),
            eval_factors=None if ev is None else tuple(ev),
        )

    def digest(self):
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class OracleReport:
    """What the generator guarantees about its output.

    ``dominant`` lists, per dimension, the mixed factors by decreasing
    absolute weight. ``best_dim`` maps each factor to the dimension where it
    carries the largest weight relative to noise. ``expect_mig`` is
    ``"high"`` when every factor is copied alone and noiselessly into one
    dimension that no other factor touches, ``"near_zero"`` when all
    dimensions share one recipe, else None.
    """

    dominant: tuple[tuple[str, ...], ...]
    best_dim: dict = field(default_factory=dict)
    expect_mig: str | None = None


def scale_to_unit(column, cardinality):
    if cardinality <= 1:
        return np.zeros(len(column))
    return 2.0 * np.asarray(column, dtype=np.float64) / (cardinality - 1) - 1.0


def _sample_grid(spec, rng):
    cards = [f.cardinality for f in spec.factors]
    total, n = spec.grid_total, spec.total
    if spec.grid_complete:
        if n < total:
            raise ValidationError(
                f"grid-complete sampling needs N >= {total} grid cells, got N = {n}")
        reps, rem = divmod(n, total)
        cells = np.concatenate([np.tile(np.arange(total), reps),
                                rng.choice(total, rem, replace=False)])
        cells = cells[rng.permutation(n)]
        return np.stack(np.unravel_index(cells, cards), axis=1).astype(np.int64)
    return np.stack([rng.integers(0, c, n) for c in cards], axis=1).astype(np.int64)


def _derived_map(dv, source_card, rng):
    table = np.empty(source_card, dtype=np.int64)
    table[rng.permutation(source_card)] = np.arange(source_card) % dv.cardinality
    return table


def _signatures(cardinality, seq_len, rng):
    """One zero-mean, unit-RMS temporal signature per factor level."""
    sig = rng.standard_normal((cardinality, seq_len))
    if seq_len > 1:
        sig -= sig.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(sig * sig, axis=1, keepdims=True))
    return sig / np.where(rms > 0, rms, 1.0)


def _apply_nonlinearity(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    if kind == "quantize":
        return np.round((np.clip(x, -1.0, 1.0) + 1.0) / 2.0 * (QUANT_LEVELS - 1)) \
            / (QUANT_LEVELS - 1) * 2.0 - 1.0
    return x


def _oracle(spec):
    mixed = [r.terms + r.patterns for r in spec.dims]
    dominant = tuple(tuple(n for n, _ in sorted(t, key=lambda t: -abs(t[1]))) for t in mixed)
    best = {}
    for name in spec.factor_names:
        snr = [max((abs(w) for n, w in t if n == name), default=0.0) / (r.sigma + 1e-12)
               for t, r in zip(mixed, spec.dims)]
        if max(snr) > 0:
            best[name] = int(np.argmax(snr))
    carriers = {name: [j for j, t in enumerate(mixed) if any(n == name for n, _ in t)]
                for name in spec.factor_names}

    def copied_alone(name):
        if len(carriers[name]) != 1:
            return False
        recipe = spec.dims[carriers[name][0]]
        return len(recipe.terms) == 1 and not recipe.patterns and recipe.sigma == 0.0

    expect = None
    if not spec.derived and all(copied_alone(f.name) for f in spec.factors):
        expect = "high"
    elif len(spec.dims) > 1 and len({(r.terms, r.nonlinearity) for r in spec.dims}) == 1 \
            and len(spec.dims[0].terms) > 1:
        expect = "near_zero"
    return OracleReport(dominant, best, expect)


def generate(spec):
    """Draw a dataset; returns ``(FactorTable, CodeTensor, OracleReport)``."""
    root = np.random.SeedSequence(spec.seed)
    grid_ss, derived_ss, noise_ss, pattern_ss = root.spawn(4)
    grid = _sample_grid(spec, np.random.default_rng(grid_ss))
    n = grid.shape[0]

    columns = {f.name: grid[:, k] for k, f in enumerate(spec.factors)}
    cards = {f.name: f.cardinality for f in spec.factors}
    labels = {}
    for dv, ss in zip(spec.derived, derived_ss.spawn(len(spec.derived))):
        table = _derived_map(dv, cards[dv.source], np.random.default_rng(ss))
        columns[dv.name] = table[columns[dv.source]]
        cards[dv.name] = dv.cardinality
        labels[dv.name] = dv.labels

    scaled = {nm: scale_to_unit(col, cards[nm]) for nm, col in columns.items()}
    signatures = {}
    used = {nm for r in spec.dims for nm, _ in r.patterns}
    for nm, ss in zip(spec.factor_names, pattern_ss.spawn(len(spec.factor_names))):
        if nm in used:
            signatures[nm] = _signatures(cards[nm], spec.seq_len, np.random.default_rng(ss))
    values = np.empty((n, len(spec.dims), spec.seq_len), dtype=np.float32)
    for j, (recipe, ss) in enumerate(zip(spec.dims, noise_ss.spawn(len(spec.dims)))):
        base = np.zeros(n)
        for nm, w in recipe.terms:
            base += w * scaled[nm]
        x = np.repeat(base[:, None], spec.seq_len, axis=1)
        for nm, w in recipe.patterns:
            x += w * signatures[nm][columns[nm]]
        if recipe.sigma > 0:
            rng = np.random.default_rng(ss)
            x += recipe.sigma * rng.standard_normal((n, spec.seq_len), dtype=np.float32)
        values[:, j, :] = _apply_nonlinearity(x, recipe.nonlinearity)

    names = spec.factor_names
    maps = [labels.get(nm) for nm in names]
    ft = FactorTable(np.stack([columns[nm] for nm in names], axis=1), names,
                     [cards[nm] for nm in names], maps if any(maps) else None)
    return ft, CodeTensor(values), _oracle(spec)


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

GENDER = DerivedFactorSpec("speaker_gender", "speaker_id", 2, ("female", "male"))
SPEECH_FACTORS = ("speaker_id", "speaker_gender", "speaking_style")


def probe_pattern_dims(n_dims=16, planted_sigma=0.3, weak_sigma=0.5, noise_sigma=1.0):
    """Recipes echoing the reported probing pattern.

    Style peaks in dim 0 (weaker copies in 1 and 5), content sits in dim 2,
    speaker identity in dim 3, gender in dim 4 (weaker copies in 7 and 9);
    all other dimensions are noise. Indices beyond ``n_dims`` are dropped.
    """
    plan = {
        0: (("speaking_style", 1.0),),
        1: (("speaking_style", 0.5),),
        2: (("content_id", 1.0),),
        3: (("speaker_id", 1.0),),
        4: (("speaker_gender", 1.0),),
        5: (("speaking_style", 0.5),),
        7: (("speaker_gender", 0.5),),
        9: (("speaker_gender", 0.5),),
    }
    dims = []
    for j in range(n_dims):
        terms = plan.get(j, ())
        if not terms:
            sigma = noise_sigma
        else:
            sigma = planted_sigma if terms[0][1] >= 1.0 else weak_sigma
        dims.append(DimRecipe(terms, sigma))
    return tuple(dims)


def version_preset(tag, n_dims=16, seq_len=256, seed=0):
    """Grid-complete preset matching one of the released dataset versions."""
    if tag not in VERSION_GRIDS:
        raise ValidationError(f"unknown preset {tag!r}; choose from {sorted(VERSION_GRIDS)}")
    return GeneratorSpec(
        name=f"synthetic-{tag}",
        factors=tuple(FactorSpec(n, c) for n, c in VERSION_GRIDS[tag]),
        derived=(GENDER,),
        dims=probe_pattern_dims(n_dims),
        seq_len=seq_len,
        seed=seed,
        version_tag=tag,
        eval_factors=SPEECH_FACTORS,
    )


def identity_spec(cardinalities, n_dims=None, seq_len=1, n_samples=None, seed=0,
                  sigma=0.0, noise_sigma=1.0, grid_complete=None):
    """Dimension j copies factor j; remaining dimensions are pure noise."""
    m = len(cardinalities)
    n_dims = m if n_dims is None else n_dims
    if n_dims < m:
        raise ValidationError("identity spec needs at least one dimension per factor")
    factors = tuple(FactorSpec(f"f{k}", c) for k, c in enumerate(cardinalities))
    dims = tuple(DimRecipe(((f"f{j}", 1.0),), sigma) if j < m else DimRecipe((), noise_sigma)
                 for j in range(n_dims))
    if grid_complete is None:
        grid_complete = n_samples is None or n_samples >= math.prod(cardinalities)
    return GeneratorSpec("identity", factors, dims, seq_len, n_samples=n_samples,
                         grid_complete=grid_complete, seed=seed)


def entangled_spec(cardinalities, n_dims=16, seq_len=1, n_samples=None, seed=0, sigma=0.1):
    """Every dimension mixes all factors with equal weight."""
    factors = tuple(FactorSpec(f"f{k}", c) for k, c in enumerate(cardinalities))
    w = 1.0 / len(factors)
    terms = tuple((f.name, w) for f in factors)
    dims = tuple(DimRecipe(terms, sigma) for _ in range(n_dims))
    grid_complete = n_samples is None or n_samples >= math.prod(cardinalities)
    return GeneratorSpec("entangled", factors, dims, seq_len, n_samples=n_samples,
                         grid_complete=grid_complete, seed=seed)


# --------------------------------------------------------------------------
# Writing a dataset directory
# --------------------------------------------------------------------------

FACTORS_FILE = "factors.csv"
CODES_FILE = "codes.bin"
MANIFEST_FILE = "manifest.json"


def write_dataset(spec, out_dir):
    """Generate ``spec`` into ``out_dir``; returns the `DatasetManifest`."""
    ft, ct, oracle = generate(spec)
    os.makedirs(out_dir, exist_ok=True)
    schema = save_factor_table(ft, os.path.join(out_dir, FACTORS_FILE))
    save_code_tensor(ct, os.path.join(out_dir, CODES_FILE))
    manifest = DatasetManifest(
        name=spec.name,
        version_tag=spec.version_tag,
        factor_grid=spec.grid,
        total_utterances=ft.n_samples,
        factors_path=FACTORS_FILE,
        codes_path=CODES_FILE,
        grid_complete=spec.grid_complete and ft.n_samples == spec.grid_total,
        seed=spec.seed,
        generator_hash=spec.digest(),
        factor_schema=schema.to_json(),
        eval_factors=spec.eval_factors,
        extra={
            "n_dims": ct.n_dims,
            "seq_len": ct.seq_len,
            "generator": spec.to_json(),
            "oracle": {"dominant": [list(d) for d in oracle.dominant],
                       "best_dim": oracle.best_dim, "expect_mig": oracle.expect_mig},
        },
    )
    write_manifest(manifest, os.path.join(out_dir, MANIFEST_FILE))
    return manifest
