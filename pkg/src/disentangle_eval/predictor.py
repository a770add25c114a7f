"""Multinomial logistic regression, rank AUC and the Explicitness score."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import TrainingError, UndefinedMetric, ValidationError

log = logging.getLogger(__name__)

_CHUNK = 4096
# below this many classes a gemv per class beats one skinny gemm in OpenBLAS
_GEMV_CLASSES = 4
# softmax terms below exp(-60) are flushed to zero; left alone, confident
# rows underflow into float32 subnormals and slow every product several-fold
_LOG_FLUSH = np.float32(-60.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.05
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not self.lr > 0 or self.l2 < 0:
            raise ValidationError("lr must be > 0 and l2 >= 0")

    def with_seed(self, seed):
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.l2, int(seed))

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True)
class LinearClassifier:
    weights: np.ndarray   # (C, F), acts on standardized features
    bias: np.ndarray      # (C,)
    mean: np.ndarray      # (F,) training-split feature means
    inv_std: np.ndarray   # (F,) 1/std, 0 for constant features
    config: TrainConfig
    loss_history: tuple = field(default=())

    @property
    def n_classes(self):
        return self.weights.shape[0]

    def logits(self, features):
        features = np.asarray(features)
        out = np.empty((features.shape[0], self.n_classes), dtype=np.float32)
        for s in range(0, features.shape[0], _CHUNK):
            xb = _standardize(features[s:s + _CHUNK], self.mean, self.inv_std)
            out[s:s + _CHUNK] = xb @ self.weights.T + self.bias
        return out

    def predict_proba(self, features):
        return _softmax(self.logits(features).astype(np.float64))

    def predict(self, features):
        return np.argmax(self.logits(features), axis=1)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _standardize(x, mean, inv_std):
    return ((np.asarray(x, dtype=np.float64) - mean) * inv_std).astype(np.float32)


def _feature_stats(x):
    n, f = x.shape
    total = np.zeros(f)
    for s in range(0, n, _CHUNK):
        total += x[s:s + _CHUNK].sum(axis=0, dtype=np.float64)
    mean = total / n
    sq = np.zeros(f)
    for s in range(0, n, _CHUNK):
        diff = x[s:s + _CHUNK].astype(np.float64) - mean
        sq += np.einsum("ij,ij->j", diff, diff)
    std = np.sqrt(sq / n)
    # constant features are fed to the model as zeros
    varying = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    inv_std = np.divide(1.0, std, out=np.zeros_like(std), where=varying)
    return mean, inv_std


def train_logreg(features, labels, config=TrainConfig(), n_classes=None):
    """Fit softmax regression with L2 penalty by mini-batch gradient descent.

    Features are standardized with statistics of ``features`` (the training
    split). Parameters and the shuffling order are driven by ``config.seed``,
    so a fixed seed reproduces the trajectory exactly.

    Args:
      features: (N, F) finite real matrix.
      labels: (N,) integers in ``[0, n_classes)``.
      config: optimizer settings.
      n_classes: number of classes; defaults to ``labels.max() + 1``.

    Returns:
      A `LinearClassifier`.

    Raises:
      ValidationError: on bad shapes, non-finite features or a single class.
      TrainingError: if the loss or the parameters stop being finite.
    """
    x = np.asarray(features)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"features {x.shape} and labels {y.shape} disagree")
    n, f = x.shape
    c = int(n_classes if n_classes is not None else y.max() + 1)
    if y.min() < 0 or y.max() >= c:
        raise ValidationError(f"labels must lie in [0, {c})")
    if len(np.unique(y)) < 2:
        raise ValidationError("training labels contain a single class")
    if n < c:
        raise ValidationError(f"need at least as many samples ({n}) as classes ({c})")

    mean, inv_std = _feature_stats(x)
    xs = np.empty((n, f), dtype=np.float32)
    for s in range(0, n, _CHUNK):
        xs[s:s + _CHUNK] = _standardize(x[s:s + _CHUNK], mean, inv_std)
    if not np.all(np.isfinite(xs)):
        raise ValidationError("features contain non-finite values")

    rng = np.random.default_rng(config.seed)
    w = (rng.standard_normal((c, f)) * 0.01).astype(np.float32)
    b = np.zeros(c, dtype=np.float32)
    lr = np.float32(config.lr)
    decay = np.float32(1.0 - config.lr * config.l2)
    bs = config.batch_size
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            xb = xs[idx]
            yb = y[idx]
            z = xb @ w.T + b
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p[z < _LOG_FLUSH] = 0.0
            norm = p.sum(axis=1, keepdims=True)
            loss -= float(np.sum(z[np.arange(len(idx)), yb] - np.log(norm[:, 0])))
            p /= norm
            p[np.arange(len(idx)), yb] -= 1.0
            p /= np.float32(len(idx))
            if c <= _GEMV_CLASSES:
                grad = np.stack([p[:, k] @ xb for k in range(c)])
            else:
                grad = p.T @ xb
            w *= decay
            w -= lr * grad
            b -= lr * p.sum(axis=0)
        loss /= n
        history.append(loss)
        if not np.isfinite(loss) or not np.all(np.isfinite(w)):
            raise TrainingError(
                f"non-finite loss at epoch {epoch + 1}/{config.epochs} "
                f"(loss={loss}, lr={config.lr}, l2={config.l2}, n={n}, features={f})")
    return LinearClassifier(w, b, mean, inv_std, config, tuple(history))


def auc_roc(scores, positives):
    """Rank-based (Mann-Whitney) area under the ROC curve; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs at least one positive and one negative sample")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def stratified_split(labels, test_fraction=0.2, seed=0, force_both=False):
    """Per-class random split; returns sorted ``(train_idx, test_idx)``.

    Each class sends ``round(test_fraction * n_c)`` samples to the test side.
    With ``force_both`` every class with at least two samples keeps one on
    each side.
    """
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        k = int(np.floor(test_fraction * idx.size + 0.5))
        if force_both and idx.size >= 2:
            k = min(max(k, 1), idx.size - 1)
        test.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_covering_classes(labels, seed, test_fraction=0.2):
    """Stratified split in which every class appears on both sides.

    Falls back to one forced resplit; raises `UndefinedMetric` if a class is
    still missing from either side.
    """
    y = np.asarray(labels)
    classes = np.unique(y)
    for force in (False, True):
        tr, te = stratified_split(y, test_fraction, seed, force_both=force)
        if (np.array_equal(np.unique(y[tr]), classes)
                and np.array_equal(np.unique(y[te]), classes)):
            return tr, te
    raise UndefinedMetric("class missing from split",
                          "a class has too few samples to appear in both splits")


def scope_features(codes, dims=None):
    """Flatten the T-vectors of the selected dimensions into (N, |dims| * T)."""
    values = getattr(codes, "values", codes)
    n = values.shape[0]
    if dims is None:
        return values.reshape(n, -1)
    return values[:, list(dims), :].reshape(n, -1)


def encode_labels(column):
    """Map observed values to dense ``0..C-1``; returns ``(labels, classes)``."""
    classes, labels = np.unique(np.asarray(column), return_inverse=True)
    return labels.ravel(), classes


@dataclass(frozen=True)
class ExplicitnessResult:
    per_class_auc: dict
    score: float
    scope: tuple | None   # None means all dimensions
    test_accuracy: float


def explicitness(dataset, codes, factor, scope=None, split_seed=0, config=TrainConfig(),
                 split=None):
    """Linear decodability of one factor, as the normalized mean one-vs-rest AUC.

    A classifier is trained on the training split of the scope's features
    (one dimension's T-vector, or all d*T values when ``scope`` is None);
    each class's AUC is computed on the held-out split from the predicted
    probabilities, and ``mean((AUC - 0.5) / 0.5)`` is clamped to [0, 1].
    """
    y, classes = encode_labels(dataset.factors.column(factor))
    if len(classes) < 2:
        raise UndefinedMetric("single class", "factor has fewer than two observed classes")
    if split is None:
        split = split_covering_classes(y, split_seed)
    train_idx, test_idx = split
    x = scope_features(codes, scope)
    clf = train_logreg(x[train_idx], y[train_idx], config, n_classes=len(classes))
    proba = clf.predict_proba(x[test_idx])
    y_test = y[test_idx]
    aucs = {int(classes[k]): auc_roc(proba[:, k], y_test == k) for k in range(len(classes))}
    norm = np.mean([(a - 0.5) / 0.5 for a in aucs.values()])
    acc = float(np.mean(np.argmax(proba, axis=1) == y_test))
    return ExplicitnessResult(aucs, float(np.clip(norm, 0.0, 1.0)),
                              None if scope is None else tuple(scope), acc)
