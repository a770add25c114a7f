"""Slow reference implementations used to cross-check the vectorized metrics.

Nothing here imports from the metric modules: counts, means and groupings
are rebuilt with plain Python loops.
"""

import math

from .errors import ValidationError


def brute_force_mi(v, z, bins_v, bins_z):
    """Mutual information in bits by an explicit double loop over bin pairs."""
    v = [int(a) for a in v]
    z = [int(b) for b in z]
    if len(v) != len(z):
        raise ValidationError(f"length mismatch: {len(v)} vs {len(z)}")
    n = len(v)
    if n == 0:
        raise ValidationError("empty input")
    joint = [[0] * bins_z for _ in range(bins_v)]
    for a, b in zip(v, z):
        if not (0 <= a < bins_v and 0 <= b < bins_z):
            raise ValidationError("entries outside their declared bins")
        joint[a][b] += 1
    p_v = [sum(joint[i]) / n for i in range(bins_v)]
    p_z = [sum(joint[i][j] for i in range(bins_v)) / n for j in range(bins_z)]
    total = 0.0
    for i in range(bins_v):
        for j in range(bins_z):
            p = joint[i][j] / n
            if p > 0:
                total += p * math.log2(p / (p_v[i] * p_z[j]))
    return max(total, 0.0)


def _mean(rows):
    k = len(rows[0])
    return [sum(r[c] for r in rows) / len(rows) for c in range(k)]


def brute_force_irs(factors, pooled, target, dims=None, min_group_size=2):
    """IRS by explicit group-by.

    ``factors`` is a sequence of per-sample factor tuples and ``pooled`` a
    sequence of per-sample code vectors. Uses the same range-diameter scale
    as the fast path. Target values whose samples share a single nuisance
    configuration contribute zero deviation; if nothing can deviate the
    score is 1.0.
    """
    factors = [tuple(int(x) for x in row) for row in factors]
    if dims is None:
        dims = range(len(pooled[0]))
    dims = list(dims)
    if not dims:
        raise ValidationError("IRS needs a non-empty set of dimensions")
    codes = [[float(row[k]) for k in dims] for row in pooled]
    n = len(factors)

    by_target = {}
    for i in range(n):
        by_target.setdefault(factors[i][target], []).append(i)

    raw = 0.0
    scale = 0.0
    for t, members in sorted(by_target.items()):
        ref = _mean([codes[i] for i in members])
        cells = {}
        for i in members:
            nuisance = tuple(x for k, x in enumerate(factors[i]) if k != target)
            cells.setdefault(nuisance, []).append(i)
        ranges = []
        for c in range(len(dims)):
            col = [codes[i][c] for i in members]
            ranges.append(max(col) - min(col))
        diameter = math.sqrt(sum(r * r for r in ranges))
        worst = 0.0
        for idx in cells.values():
            if len(idx) < min_group_size:
                continue
            mean = _mean([codes[i] for i in idx])
            dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(mean, ref)))
            worst = max(worst, dist)
            scale = max(scale, (1.0 - len(idx) / len(members)) * diameter)
        raw += len(members) / n * worst
    if scale <= 0.0:
        return 1.0
    return min(max(1.0 - raw / scale, 0.0), 1.0)
