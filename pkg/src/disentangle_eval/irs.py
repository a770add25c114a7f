"""Interventional Robustness Score.

For every value ``t`` of the target factor the reference set is all samples
with ``v = t``. Each observed configuration ``c`` of the remaining (nuisance)
factors, taken jointly, forms an intervention cell; its deviation is the
l2 distance between the cell's mean code and the reference mean. The
largest deviation per target value is averaged with weights equal to the
target value's prevalence.

The raw score is normalized by a range-based bound. Writing ``w_c`` for the
share of the reference set that falls in cell ``c`` and ``R_t`` for the
per-coordinate range of codes in the reference set, every deviation obeys
``dev(t, c) <= (1 - w_c) * ||R_t||``. The scale is the largest such bound
over usable cells and target values, and ``score = 1 - raw / scale``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetric, ValidationError

DEFAULT_MIN_GROUP = 2
SCALE_NAME = "range-diameter"


@dataclass(frozen=True)
class InterventionPlan:
    target_factor: int
    nuisance_factors: tuple[int, ...]
    min_group_size: int
    # target value -> nuisance configurations (tuples) with >= min_group_size samples
    realizations: dict = field(default_factory=dict)
    sample_target: np.ndarray = None   # (N,) target value per sample
    sample_cell: np.ndarray = None     # (N,) dense cell id per sample
    cell_target: np.ndarray = None     # (n_cells,) target value of each cell
    cell_count: np.ndarray = None      # (n_cells,)
    cell_usable: np.ndarray = None     # (n_cells,) bool
    n_cells_total: int = 0

    @property
    def coverage(self):
        """Fraction of observed (target, nuisance) cells that are usable."""
        return float(self.cell_usable.sum()) / max(self.n_cells_total, 1)


def build_plan(dataset, target, min_group_size=DEFAULT_MIN_GROUP):
    """Enumerate usable (target value, nuisance configuration) cells."""
    ft = dataset.factors
    if ft.n_factors < 2:
        raise UndefinedMetric("no nuisance factors",
                              "IRS needs at least one nuisance factor")
    if not 0 <= target < ft.n_factors:
        raise ValidationError(f"target factor {target} out of range")
    nuisance = tuple(k for k in range(ft.n_factors) if k != target)
    tv = ft.column(target)
    keys = np.column_stack([tv, ft.factors[:, list(nuisance)]])
    cells, sample_cell, counts = np.unique(keys, axis=0, return_inverse=True,
                                           return_counts=True)
    sample_cell = sample_cell.ravel()
    usable = counts >= min_group_size

    realizations = {}
    for c in np.flatnonzero(usable):
        realizations.setdefault(int(cells[c, 0]), []).append(tuple(int(x) for x in cells[c, 1:]))
    if not any(len(cfgs) >= 2 for cfgs in realizations.values()):
        raise UndefinedMetric("no nuisance variation",
                              f"factor {ft.factor_names[target]!r} has no nuisance variation")
    return InterventionPlan(
        target_factor=target,
        nuisance_factors=nuisance,
        min_group_size=min_group_size,
        realizations=realizations,
        sample_target=tv,
        sample_cell=sample_cell,
        cell_target=cells[:, 0].copy(),
        cell_count=counts,
        cell_usable=usable,
        n_cells_total=len(counts),
    )


@dataclass(frozen=True)
class IRSResult:
    score: float
    raw: float
    scale: float
    coverage: float
    max_deviation: dict  # target value -> d_max(t)


def _group_means(x, groups, n_groups):
    counts = np.bincount(groups, minlength=n_groups).astype(np.float64)
    sums = np.stack([np.bincount(groups, weights=x[:, k], minlength=n_groups)
                     for k in range(x.shape[1])], axis=1)
    return sums / counts[:, None]


def irs_details(dataset, pooled, target, dims=None, min_group_size=DEFAULT_MIN_GROUP,
                plan=None):
    """Compute IRS with raw deviation, scale and coverage."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if dims is None:
        dims = range(pooled.shape[1])
    dims = list(dims)
    if not dims:
        raise ValidationError("IRS needs a non-empty set of dimensions")
    if plan is None:
        plan = build_plan(dataset, target, min_group_size)
    x = pooled[:, dims]

    values, tgt_idx = np.unique(plan.sample_target, return_inverse=True)
    tgt_idx = tgt_idx.ravel()
    n_t = np.bincount(tgt_idx, minlength=len(values))
    ref_mean = _group_means(x, tgt_idx, len(values))
    cell_mean = _group_means(x, plan.sample_cell, len(plan.cell_count))

    cell_t = np.searchsorted(values, plan.cell_target)
    dev = np.linalg.norm(cell_mean - ref_mean[cell_t], axis=1)
    share = plan.cell_count / n_t[cell_t]

    lo = np.full((len(values), x.shape[1]), np.inf)
    hi = np.full((len(values), x.shape[1]), -np.inf)
    np.minimum.at(lo, tgt_idx, x)
    np.maximum.at(hi, tgt_idx, x)
    diameter = np.linalg.norm(hi - lo, axis=1)
    bound = (1.0 - share) * diameter[cell_t]

    d_max = np.zeros(len(values))
    b_max = np.zeros(len(values))
    usable = plan.cell_usable
    np.maximum.at(d_max, cell_t[usable], dev[usable])
    np.maximum.at(b_max, cell_t[usable], bound[usable])

    prevalence = n_t / n_t.sum()
    raw = float(np.sum(prevalence * d_max))
    scale = float(b_max.max())
    score = 1.0 if scale <= 0.0 else float(np.clip(1.0 - raw / scale, 0.0, 1.0))
    return IRSResult(score, raw, scale, plan.coverage,
                     {int(v): float(d) for v, d in zip(values, d_max)})


def irs_score(dataset, pooled, target, dims=None, min_group_size=DEFAULT_MIN_GROUP):
    """IRS in [0, 1] for ``target`` over the given code dimensions; higher is better."""
    return irs_details(dataset, pooled, target, dims, min_group_size).score
