"""Histogram entropy, mutual information, MIG and JEMMIG.

All quantities are in bits. The JEMMIG normalizer uses ``log2`` of the
effective bin count of the best dimension, so the base matters there and is
fixed to 2 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetric, ValidationError

EPS = 1e-9


def _counts(column, cardinality):
    column = np.asarray(column, dtype=np.int64)
    if column.size == 0:
        raise ValidationError("entropy of an empty column is undefined")
    if column.min() < 0 or column.max() >= cardinality:
        raise ValidationError(f"entries must lie in [0, {cardinality})")
    return np.bincount(column, minlength=cardinality)


def _entropy_from_counts(counts):
    p = counts[counts > 0] / counts.sum()
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def entropy(column, cardinality):
    """Plug-in Shannon entropy of an integer column, in bits."""
    return _entropy_from_counts(_counts(column, cardinality))


def contingency(v, z, bins_v, bins_z):
    v = np.asarray(v, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if v.shape != z.shape:
        raise ValidationError(f"length mismatch: {v.shape[0]} vs {z.shape[0]}")
    if v.size == 0:
        raise ValidationError("mutual information of empty columns is undefined")
    if v.min() < 0 or v.max() >= bins_v or z.min() < 0 or z.max() >= bins_z:
        raise ValidationError("entries outside their declared bins")
    joint = np.bincount(v * bins_z + z, minlength=bins_v * bins_z)
    return joint.reshape(bins_v, bins_z)


def _mi_from_joint(joint):
    n = joint.sum()
    pv = joint.sum(axis=1) / n
    pz = joint.sum(axis=0) / n
    i, j = np.nonzero(joint)
    pij = joint[i, j] / n
    mi = np.sum(pij * np.log2(pij / (pv[i] * pz[j])))
    return float(max(mi, 0.0))


def mutual_information(v, z, bins_v, bins_z):
    """Plug-in mutual information of two integer columns, in bits."""
    return _mi_from_joint(contingency(v, z, bins_v, bins_z))


def joint_entropy(v, z, bins_v, bins_z):
    return _entropy_from_counts(contingency(v, z, bins_v, bins_z).ravel())


@dataclass(frozen=True)
class MIMatrix:
    values: np.ndarray               # (m, d) I(v_i, z_j)
    factor_entropies: np.ndarray     # (m,)
    effective_code_bins: np.ndarray  # (d,)

    @property
    def shape(self):
        return self.values.shape


def mi_matrix(dataset, binned):
    ft = dataset.factors
    if binned.n_samples != ft.n_samples:
        raise ValidationError("binned codes and factors disagree on sample count")
    m, d = ft.n_factors, binned.n_dims
    values = np.zeros((m, d))
    ent = np.zeros(m)
    for i in range(m):
        vcol, bv = ft.column(i), ft.cardinalities[i]
        ent[i] = entropy(vcol, bv)
        for j in range(d):
            values[i, j] = mutual_information(
                vcol, binned.bins[:, j], bv, int(binned.effective_bins[j]))
    return MIMatrix(values, ent, np.asarray(binned.effective_bins, dtype=np.int64).copy())


def _ranked(row):
    """Index of the largest entry (lowest index on ties) and the runner-up value."""
    best = int(np.argmax(row))
    return best, float(np.max(np.delete(row, best)))


def _check(mi, factor):
    if mi.values.shape[1] < 2:
        raise ValidationError("MIG needs at least two code dimensions")
    h = float(mi.factor_entropies[factor])
    if h <= 0.0:
        raise UndefinedMetric("zero entropy", f"factor {factor} has zero entropy")
    return h


def mig(mi, factor):
    """Mutual information gap of one factor, normalized by its entropy."""
    h = _check(mi, factor)
    row = mi.values[factor]
    best, second = _ranked(row)
    return float(np.clip((row[best] - second) / h, 0.0, 1.0))


def dataset_mean(scores):
    """Unweighted mean over the defined (non-None) scores, or None."""
    vals = [s for s in scores if s is not None]
    return float(np.mean(vals)) if vals else None


def dataset_mig(mi):
    out = []
    for i in range(mi.values.shape[0]):
        try:
            out.append(mig(mi, i))
        except UndefinedMetric:
            out.append(None)
    return dataset_mean(out)


def _jemmig_terms(h, h_joint, i_best, i_second, bins_best):
    raw = h_joint - i_best + i_second
    denom = h + np.log2(bins_best)
    return float(raw), float(np.clip(1.0 - raw / denom, 0.0, 1.0))


def jemmig(dataset, binned, mi, factor):
    """Return ``(raw, normalized)`` JEMMIG for one factor.

    Raw is lower-better; normalized is ``1 - raw / (H(v) + log2 B_z)`` with
    ``B_z`` the effective bin count of the best dimension, higher-better.
    """
    h = _check(mi, factor)
    row = mi.values[factor]
    best, second = _ranked(row)
    bins_best = int(mi.effective_code_bins[best])
    h_joint = joint_entropy(dataset.factors.column(factor), binned.bins[:, best],
                            dataset.factors.cardinalities[factor], bins_best)
    return _jemmig_terms(h, h_joint, row[best], second, bins_best)


def dimension_cells(dataset, binned, mi, factor):
    """Per-dimension MIG and JEMMIG cells for one factor.

    For dimension j the MIG cell is the informativeness share
    ``I(v, z_j) / H(v)``; the JEMMIG cell evaluates the JEMMIG formula with
    ``z_j`` in the role of the best dimension and the strongest other
    dimension as runner-up. Returns arrays ``(mig, jemmig_raw, jemmig_norm)``.
    """
    h = _check(mi, factor)
    row = mi.values[factor]
    vcol = dataset.factors.column(factor)
    bv = dataset.factors.cardinalities[factor]
    d = row.shape[0]
    share = np.clip(row / h, 0.0, 1.0)
    raw = np.empty(d)
    norm = np.empty(d)
    for j in range(d):
        other = float(np.max(np.delete(row, j)))
        bz = int(mi.effective_code_bins[j])
        hj = joint_entropy(vcol, binned.bins[:, j], bv, bz)
        raw[j], norm[j] = _jemmig_terms(h, hj, row[j], other, bz)
    return share, raw, norm
