"""Time-axis pooling and histogram binning of codes and continuous factors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

POOLING_METHODS = ("mean", "maxabs", "rms")
BINNING_STRATEGIES = ("uniform", "quantile")


@dataclass(frozen=True)
class PoolingSpec:
    method: str = "mean"

    def __post_init__(self):
        method = {"max-abs": "maxabs"}.get(self.method, self.method)
        if method not in POOLING_METHODS:
            raise ValidationError(f"pooling must be one of {POOLING_METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", method)


@dataclass(frozen=True)
class BinningSpec:
    strategy: str = "uniform"
    n_bins: int = 20

    def __post_init__(self):
        strategy = {"uniform-width": "uniform"}.get(self.strategy, self.strategy)
        if strategy not in BINNING_STRATEGIES:
            raise ValidationError(
                f"binning must be one of {BINNING_STRATEGIES}, got {self.strategy!r}")
        if int(self.n_bins) < 2:
            raise ValidationError(f"n_bins must be >= 2, got {self.n_bins}")
        object.__setattr__(self, "strategy", strategy)
        object.__setattr__(self, "n_bins", int(self.n_bins))


DEFAULT_CODE_BINNING = BinningSpec("uniform", 20)
DEFAULT_FACTOR_BINNING = BinningSpec("quantile", 10)


class Binned(NamedTuple):
    """Result of binning one column.

    ``edges`` holds the interior bin boundaries only, strictly increasing;
    ``n_effective = len(edges) + 1``.
    """

    bins: np.ndarray
    edges: np.ndarray
    n_effective: int


@dataclass(frozen=True)
class BinnedCodes:
    bins: np.ndarray                  # (N, d) int64
    edges: tuple[np.ndarray, ...]     # per dimension, interior edges
    effective_bins: np.ndarray        # (d,) int64

    @property
    def n_samples(self):
        return self.bins.shape[0]

    @property
    def n_dims(self):
        return self.bins.shape[1]


def pool_time_axis(codes, spec=PoolingSpec()):
    """Reduce (N, d, T) codes to an (N, d) float64 matrix along T."""
    values = getattr(codes, "values", codes)
    values = np.asarray(values)
    if spec.method == "mean":
        return values.mean(axis=2, dtype=np.float64)
    if spec.method == "maxabs":
        return np.abs(values).max(axis=2).astype(np.float64)
    x = values.astype(np.float64)
    return np.sqrt(np.mean(x * x, axis=2))


def bin_values(column, spec):
    """Assign each value of ``column`` to a histogram bin.

    Uniform width splits ``[min, max]`` into ``n_bins`` equal intervals,
    closed on the left except the last one, which also holds ``max``.
    Quantile edges are the empirical ``k / n_bins`` quantiles (inverted CDF,
    so every edge is an observed value); a value equal to an edge falls in
    the lower bin. Duplicate quantile edges, and edges at the maximum, are
    merged away so no bin is empty; the surviving count is ``n_effective``.
    A constant column maps to all zeros with one effective bin.
    """
    x = np.asarray(column, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValidationError("cannot bin an empty column")
    lo, hi = x.min(), x.max()
    if lo == hi:
        return Binned(np.zeros(x.size, dtype=np.int64), np.empty(0), 1)
    if spec.strategy == "uniform":
        edges = np.linspace(lo, hi, spec.n_bins + 1)[1:-1]
        bins = np.searchsorted(edges, x, side="right")
    else:
        # inverted-CDF quantile k/B is the order statistic of rank ceil(n k / B);
        # integer ranks avoid float error in n * (k / B) at exact multiples
        k = np.arange(1, spec.n_bins, dtype=np.int64)
        ranks = -(-x.size * k // spec.n_bins)
        edges = np.unique(np.sort(x)[ranks - 1])
        edges = edges[edges < hi]
        bins = np.searchsorted(edges, x, side="left")
    return Binned(bins.astype(np.int64), edges, len(edges) + 1)


def discretize_codes(codes, pool=PoolingSpec(), binning=DEFAULT_CODE_BINNING):
    """Pool each dimension over time, then bin it independently."""
    return bin_pooled(pool_time_axis(codes, pool), binning)


def bin_pooled(pooled, binning=DEFAULT_CODE_BINNING):
    """Bin every column of an already pooled (N, d) matrix."""
    n, d = pooled.shape
    bins = np.empty((n, d), dtype=np.int64)
    edges, eff = [], np.empty(d, dtype=np.int64)
    for j in range(d):
        b = bin_values(pooled[:, j], binning)
        bins[:, j] = b.bins
        edges.append(b.edges)
        eff[j] = b.n_effective
    return BinnedCodes(bins, tuple(edges), eff)


def discretize_continuous_factor(raw, spec=DEFAULT_FACTOR_BINNING):
    """Bin a raw continuous factor; returns ``(column, cardinality)``."""
    b = bin_values(raw, spec)
    return b.bins, b.n_effective


def discretize_pending_factors(ft, spec=DEFAULT_FACTOR_BINNING):
    """Install binned columns for every continuous factor still held raw."""
    for k in ft.pending_continuous():
        column, card = discretize_continuous_factor(ft.continuous_sources[k], spec)
        ft = ft.with_factor(k, column, card)
    return ft
