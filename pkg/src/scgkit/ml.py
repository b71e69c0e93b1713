"""Training and evaluation protocol: stratified splitting, k-fold
cross-validation, two seeded classifiers, and confusion-matrix metrics.

Both classifiers are small, fully deterministic implementations: logistic
regression fit by gradient descent on max-scaled counts, and a bagged forest
of Gini trees with sqrt-feature subsampling whose bootstrap is indexed by a
stable row identifier (so prediction is invariant under training-row
permutation when ids travel with the rows).  Anything exposing ``fit`` and
``predict`` plugs into the same protocol.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import IO, Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import DimensionMismatch, TooFewSamples
from .features import Vocabulary
from .trace import MALWARE, Dataset
from .validation import as_labels, as_matrix, check_n_features, check_X_y

# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with malware as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class Metrics:
    """Rates derived from a confusion matrix.

    A rate whose denominator is zero is ``None`` rather than a crash or a
    fake number.
    """

    tpr: float | None
    fpr: float | None
    acc: float | None


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    tpr = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    fpr = cm.fp / (cm.fp + cm.tn) if cm.fp + cm.tn > 0 else None
    acc = (cm.tp + cm.tn) / cm.total if cm.total > 0 else None
    return Metrics(tpr=tpr, fpr=fpr, acc=acc)


def confusion_from_predictions(y_true, y_pred) -> ConfusionMatrix:
    y_true = as_labels(y_true)
    y_pred = as_labels(y_pred)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"{y_true.shape[0]} labels vs {y_pred.shape[0]} predictions")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
    )


def evaluate(model, X, y) -> tuple[ConfusionMatrix, Metrics]:
    """Predict on a test set and report confusion counts plus rates."""
    X, y = check_X_y(X, y)
    cm = confusion_from_predictions(y, model.predict(X))
    return cm, compute_metrics(cm)


# ---------------------------------------------------------------------------
# splitting and cross-validation


def split_dataset(dataset: Dataset, test_fraction: float = 0.30,
                  seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified train/test split of a trace dataset, deterministic per seed."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if dataset.n_malware < 2 or dataset.n_benign < 2:
        raise TooFewSamples(
            f"need >= 2 samples per class, got {dataset.n_malware}/{dataset.n_benign}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (MALWARE, 1 - MALWARE):
        members = [t for t in dataset if t.label == label]
        order = rng.permutation(len(members))
        n_test = int(len(members) * test_fraction + 0.5)
        test_idx = set(order[:n_test].tolist())
        for i, trace in enumerate(members):
            (test if i in test_idx else train).append(trace)
    return Dataset.from_traces(train), Dataset.from_traces(test)


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Deal each class round-robin into k folds after a seeded shuffle."""
    y = as_labels(y)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for label in (1, 0):
        members = np.flatnonzero(y == label)
        members = members[rng.permutation(len(members))]
        for i, idx in enumerate(members):
            folds[i % k].append(int(idx))
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass(frozen=True)
class CvResult:
    """Mean metrics over stratified folds, recording any fold-count adjustment."""

    k_requested: int
    k: int
    tpr: float
    fpr: float
    acc: float

    @property
    def adjusted(self) -> bool:
        return self.k != self.k_requested


def kfold_cv(X, y, trainer: Callable, k: int = 10, seed: int = 0) -> CvResult:
    """Stratified k-fold cross-validation, averaging metrics arithmetically.

    When a class has fewer samples than k, the fold count drops to the
    smaller class size (reported in the result).  ``trainer`` is any callable
    mapping ``(X, y)`` to a fitted model with ``predict``.
    """
    X, y = check_X_y(X, y)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    k_eff = min(k, n_pos, n_neg)
    if k_eff < 2:
        raise TooFewSamples(
            f"cannot fold {n_pos} malware / {n_neg} benign samples into >= 2 folds")

    folds = stratified_folds(y, k_eff, seed=seed)
    tprs, fprs, accs = [], [], []
    for held_out in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[held_out] = False
        model = trainer(X[mask], y[mask])
        _, metrics = evaluate(model, X[held_out], y[held_out])
        tprs.append(metrics.tpr)
        fprs.append(metrics.fpr)
        accs.append(metrics.acc)
    return CvResult(k_requested=k, k=k_eff,
                    tpr=float(np.mean(tprs)), fpr=float(np.mean(fprs)),
                    acc=float(np.mean(accs)))


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(X, y, weights, bias: float, l2: float = 0.0) -> float:
    """Mean cross-entropy of the linear model, plus an L2 penalty on weights."""
    X = as_matrix(X)
    y = as_labels(y)
    z = X @ np.asarray(weights, dtype=np.float64) + bias
    data_term = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return data_term + 0.5 * l2 * float(np.dot(weights, weights))


def logistic_gradient(X, y, weights, bias: float,
                      l2: float = 0.0) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`logistic_loss` in (weights, bias)."""
    X = as_matrix(X)
    y = as_labels(y)
    weights = np.asarray(weights, dtype=np.float64)
    residual = _sigmoid(X @ weights + bias) - y
    grad_w = X.T @ residual / X.shape[0] + l2 * weights
    grad_b = float(np.mean(residual))
    return grad_w, grad_b


class LogisticRegression(BaseEstimator, ClassifierMixin):
    """Binary logistic regression fit by full-batch gradient descent.

    Training counts are scaled per column by their training maximum (stored
    on the model) before fitting; the decision threshold is fixed at 0.5.
    Weights start at zero, so fitting is deterministic with no seed.
    """

    def __init__(self, learning_rate: float = 0.5, epochs: int = 500, l2: float = 1e-4):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2

    def fit(self, X, y) -> "LogisticRegression":
        X, y = check_X_y(X, y)
        col_max = X.max(axis=0)
        col_max[col_max == 0] = 1.0
        Xs = X / col_max

        w = np.zeros(X.shape[1])
        b = 0.0
        for _ in range(self.epochs):
            grad_w, grad_b = logistic_gradient(Xs, y, w, b, l2=self.l2)
            w -= self.learning_rate * grad_w
            b -= self.learning_rate * grad_b

        self.column_max_ = col_max
        self.weights_ = w
        self.bias_ = b
        self.n_features_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        X = check_n_features(as_matrix(X), self.n_features_)
        return (X / self.column_max_) @ self.weights_ + self.bias_

    def predict_proba(self, X) -> np.ndarray:
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int64)


def train_logistic(X, y, learning_rate: float = 0.5, epochs: int = 500,
                   l2: float = 1e-4) -> LogisticRegression:
    return LogisticRegression(learning_rate=learning_rate, epochs=epochs, l2=l2).fit(X, y)


# ---------------------------------------------------------------------------
# random forest


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _best_split(X: np.ndarray, y: np.ndarray, feature_ids: np.ndarray,
                min_leaf: int) -> tuple[int, float, float] | None:
    """Lowest weighted-Gini axis split among the candidate features.

    Thresholds are midpoints between consecutive distinct values; splits
    leaving fewer than ``min_leaf`` rows on either side are skipped.  Returns
    ``(feature, threshold, impurity)`` or ``None`` when no valid split exists.
    """
    n = len(y)
    best: tuple[int, float, float] | None = None
    for j in feature_ids:
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        sorted_col = col[order]
        sorted_y = y[order]
        # cumulative positive counts; boundary i puts rows [0, i) on the left
        pos_prefix = np.cumsum(sorted_y)
        total_pos = pos_prefix[-1]
        for i in range(min_leaf, n - min_leaf + 1):
            if sorted_col[i] == sorted_col[i - 1]:
                continue
            left_pos = int(pos_prefix[i - 1])
            left = np.array([i - left_pos, left_pos])
            right = np.array([(n - i) - (total_pos - left_pos), total_pos - left_pos])
            impurity = (i * _gini(left) + (n - i) * _gini(right)) / n
            if best is None or impurity < best[2]:
                threshold = (sorted_col[i - 1] + sorted_col[i]) / 2.0
                best = (int(j), float(threshold), float(impurity))
    return best


def _grow_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator,
               max_depth: int | None, min_leaf: int, n_subsample: int,
               depth: int = 0) -> dict:
    counts = np.bincount(y, minlength=2)
    # ties vote benign: a coin-flip malware verdict is worse than a miss here
    leaf = {"leaf": int(counts[1] > counts[0]), "counts": counts.tolist()}
    if counts[0] == 0 or counts[1] == 0:
        return leaf
    if max_depth is not None and depth >= max_depth:
        return leaf
    if len(y) < 2 * min_leaf:
        return leaf

    feature_ids = rng.choice(X.shape[1], size=n_subsample, replace=False)
    split = _best_split(X, y, np.sort(feature_ids), min_leaf)
    if split is None:
        return leaf
    feature, threshold, _ = split
    goes_left = X[:, feature] <= threshold
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow_tree(X[goes_left], y[goes_left], rng, max_depth,
                           min_leaf, n_subsample, depth + 1),
        "right": _grow_tree(X[~goes_left], y[~goes_left], rng, max_depth,
                            min_leaf, n_subsample, depth + 1),
    }


def _tree_predict_one(node: dict, row: np.ndarray) -> int:
    while "leaf" not in node:
        node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
    return node["leaf"]


class RandomForest(BaseEstimator, ClassifierMixin):
    """Bagged Gini decision trees with sqrt-feature subsampling.

    Each tree trains on a bootstrap drawn from the rows ordered by a stable
    row identifier (positional by default), so shuffling the training rows
    together with their ids leaves every tree, and therefore every
    prediction, unchanged.  Majority vote decides; ties vote benign.
    """

    def __init__(self, n_trees: int = 50, max_depth: int | None = None,
                 min_leaf: int = 1, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y, row_ids: Sequence | None = None) -> "RandomForest":
        X, y = check_X_y(X, y)
        if row_ids is None:
            order = np.arange(X.shape[0])
        else:
            row_ids = np.asarray(row_ids)
            if row_ids.shape[0] != X.shape[0]:
                raise DimensionMismatch(
                    f"{row_ids.shape[0]} row ids vs {X.shape[0]} rows")
            order = np.argsort(row_ids, kind="stable")
        Xs, ys = X[order], y[order]

        n_subsample = max(1, int(math.sqrt(X.shape[1])))
        min_leaf = max(1, self.min_leaf)
        n = X.shape[0]
        self.trees_ = []
        for seq in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(seq)
            boot = rng.integers(0, n, size=n)
            self.trees_.append(_grow_tree(Xs[boot], ys[boot], rng,
                                          self.max_depth, min_leaf,
                                          n_subsample))
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = check_n_features(as_matrix(X), self.n_features_)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees_:
            votes += np.array([_tree_predict_one(tree, row) for row in X])
        return (votes * 2 > len(self.trees_)).astype(np.int64)


def train_forest(X, y, n_trees: int = 50, max_depth: int | None = None,
                 min_leaf: int = 1, seed: int = 0,
                 row_ids: Sequence | None = None) -> RandomForest:
    return RandomForest(n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf,
                        seed=seed).fit(X, y, row_ids=row_ids)


# ---------------------------------------------------------------------------
# model serialization


def vocabulary_hash(vocabulary: Vocabulary) -> str:
    digest = hashlib.sha256()
    digest.update(vocabulary.kind.encode("utf-8"))
    for key in vocabulary.keys:
        digest.update(b"\x00")
        digest.update(key.encode("utf-8"))
    return digest.hexdigest()


def save_model(model, stream: IO[str], vocabulary: Vocabulary | None = None) -> None:
    """Serialize a fitted classifier as a JSON document."""
    if isinstance(model, LogisticRegression):
        doc = {
            "kind": "logistic",
            "hyperparameters": model.get_params(),
            "parameters": {
                "weights": model.weights_.tolist(),
                "bias": model.bias_,
                "column_max": model.column_max_.tolist(),
            },
        }
    elif isinstance(model, RandomForest):
        doc = {
            "kind": "forest",
            "hyperparameters": model.get_params(),
            "parameters": {
                "trees": model.trees_,
                "n_features": model.n_features_,
            },
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    doc["vocabulary_hash"] = vocabulary_hash(vocabulary) if vocabulary else None
    json.dump(doc, stream, indent=2)
    stream.write("\n")


def load_model(stream: IO[str]):
    """Rebuild a classifier saved by :func:`save_model`.

    Returns ``(model, vocabulary_hash)``; predictions of the rebuilt model
    match the original exactly.
    """
    doc = json.load(stream)
    kind = doc.get("kind")
    params = doc.get("parameters", {})
    if kind == "logistic":
        model = LogisticRegression(**doc.get("hyperparameters", {}))
        model.weights_ = np.asarray(params["weights"], dtype=np.float64)
        model.bias_ = float(params["bias"])
        model.column_max_ = np.asarray(params["column_max"], dtype=np.float64)
        model.n_features_ = len(model.weights_)
    elif kind == "forest":
        model = RandomForest(**doc.get("hyperparameters", {}))
        model.trees_ = params["trees"]
        model.n_features_ = int(params["n_features"])
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return model, doc.get("vocabulary_hash")
