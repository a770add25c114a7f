"""Dimension-wise linear probing with multi-run statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .predictor import TrainConfig, encode_labels, scope_features, split_covering_classes, train_logreg
from .seeding import ALL_DIMS, derive_seed

TREND_HEADER = ("dimension", "mean_accuracy", "std_accuracy")


@dataclass(frozen=True)
class ProbeResult:
    factor: str
    per_dim: tuple            # ((dim, mean, std), ...)
    all_combined: tuple       # (mean, std)
    runs: int
    config: dict
    majority_baseline: float
    accuracies: np.ndarray    # (runs, d + 1), last column is "All"

    def to_json(self):
        return {
            "factor": self.factor,
            "runs": self.runs,
            "config": self.config,
            "majority_baseline": self.majority_baseline,
            "per_dim": [{"dimension": j, "mean_accuracy": m, "std_accuracy": s}
                        for j, m, s in self.per_dim],
            "all": {"mean_accuracy": self.all_combined[0], "std_accuracy": self.all_combined[1]},
            "run_accuracies": self.accuracies.tolist(),
        }


def probe_factor(dataset, codes, factor, runs=5, config=TrainConfig(), seed=0):
    """Probe every dimension's T-vector, and all of them together, for one factor.

    Each run draws a fresh stratified 80/20 split; each (run, scope) pair
    gets its own initialization seed. Accuracy is top-1 on the held-out
    split; mean and (population) std are taken over runs.
    """
    if runs < 1:
        raise ValidationError("runs must be >= 1")
    y, classes = encode_labels(dataset.factors.column(factor))
    if len(classes) < 2:
        raise ValidationError("probing needs a factor with at least two classes")
    d = codes.n_dims
    acc = np.zeros((runs, d + 1))
    for r in range(runs):
        train_idx, test_idx = split_covering_classes(y, derive_seed(seed, "probe-split", factor, r))
        for col, scope in enumerate([[j] for j in range(d)] + [None]):
            counter = ALL_DIMS if scope is None else scope[0]
            cfg = config.with_seed(derive_seed(seed, "probe-init", factor, r, counter))
            x = scope_features(codes, scope)
            clf = train_logreg(x[train_idx], y[train_idx], cfg, n_classes=len(classes))
            acc[r, col] = np.mean(clf.predict(x[test_idx]) == y[test_idx])
    mean = acc.mean(axis=0)
    std = acc.std(axis=0)
    counts = np.bincount(y)
    return ProbeResult(
        factor=dataset.factors.factor_names[factor],
        per_dim=tuple((j, float(mean[j]), float(std[j])) for j in range(d)),
        all_combined=(float(mean[d]), float(std[d])),
        runs=runs,
        config={**config.to_json(), "seed": seed, "test_fraction": 0.2},
        majority_baseline=float(counts.max() / counts.sum()),
        accuracies=acc,
    )


def emit_accuracy_trend(result, path):
    """Write the (dimension, mean, std) plot table with a final "All" row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TREND_HEADER)
        for j, m, s in result.per_dim:
            w.writerow([j, repr(m), repr(s)])
        w.writerow(["All", repr(result.all_combined[0]), repr(result.all_combined[1])])


def read_accuracy_trend(path):
    """Parse a trend CSV back into ``(per_dim, all_combined)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != TREND_HEADER:
        raise ValidationError(f"{path}: unexpected header {rows[0]}")
    per_dim, combined = [], None
    for dim, m, s in rows[1:]:
        if dim == "All":
            combined = (float(m), float(s))
        else:
            per_dim.append((int(dim), float(m), float(s)))
    return tuple(per_dim), combined
