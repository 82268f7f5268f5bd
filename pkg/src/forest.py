from __future__ import annotations
import logging
import math
from typing import NamedTuple, Self

import numpy as np
from joblib import Parallel, delayed

from src.errors import DataError, SingleClassData, UntrainedModel

log = logging.getLogger(__name__)

N_FEATURES = 128
DEFAULT_ESTIMATORS = 5
LEAF = -1


class TreeNode(NamedTuple):
    feature_index: int
    threshold: float
    left: int
    right: int
    leaf_probability: float

    @property
    def is_leaf(self) -> bool:
        return self.feature_index == LEAF


class Tree(NamedTuple):
    """A fitted tree as flat node arrays; node 0 is the root, leaves have feature -1."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_nodes(cls, nodes: list[TreeNode]) -> Self:
        columns = list(zip(*nodes)) if nodes else [(), (), (), (), ()]
        return cls(
            np.array(columns[0], dtype=np.int64),
            np.array(columns[1], dtype=np.float64),
            np.array(columns[2], dtype=np.int64),
            np.array(columns[3], dtype=np.int64),
            np.array(columns[4], dtype=np.float64),
        )

    def nodes(self) -> list[TreeNode]:
        return [
            TreeNode(int(f), float(t), int(l), int(r), float(v))
            for f, t, l, r, v in zip(self.feature, self.threshold, self.left, self.right, self.value)
        ]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while len(active):
            at = node[active]
            goes_left = X[active, self.feature[at]] <= self.threshold[at]
            node[active] = np.where(goes_left, self.left[at], self.right[at])
            active = active[self.feature[node[active]] != LEAF]
        return self.value[node]


class ForestModel(NamedTuple):
    trees: list[Tree]
    n_estimators: int = DEFAULT_ESTIMATORS
    rng_seed: int = 0
    n_features: int = N_FEATURES
    training_meta: dict | None = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise UntrainedModel("Forest has no trees")
        X = as_matrix(X, self.n_features)
        return np.mean(np.stack([tree.predict_proba(X) for tree in self.trees]), axis=0)


class Split(NamedTuple):
    feature: int
    threshold: float
    score: float


def as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DataError(f"Expected rows of {n_features} features. Got shape {X.shape}")
    return X


def split_score(n_left, pos_left, n_right, pos_right):
    """
    Sum over both sides of (positives^2 + negatives^2) / size. Maximising it
    minimises the size weighted Gini impurity of the split.
    """
    neg_left = n_left - pos_left
    neg_right = n_right - pos_right
    return (pos_left * pos_left + neg_left * neg_left) / n_left + (
        pos_right * pos_right + neg_right * neg_right
    ) / n_right


def feature_split(column: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """
    Best (threshold, score) for one feature with thresholds at midpoints of
    consecutive distinct values. None when the feature is constant.
    y holds 0.0 / 1.0 labels.
    """
    if column.dtype == np.uint8:
        totals = np.bincount(column, minlength=256)
        values = np.flatnonzero(totals)
        if len(values) < 2:
            return None
        positives = np.bincount(column, weights=y, minlength=256)
        n_left = np.cumsum(totals)[values[:-1]].astype(np.float64)
        pos_left = np.cumsum(positives)[values[:-1]]
        lower, upper = values[:-1], values[1:]
    else:
        order = np.argsort(column, kind="stable")
        ordered = column[order]
        boundaries = np.flatnonzero(ordered[1:] != ordered[:-1])
        if not len(boundaries):
            return None
        n_left = (boundaries + 1).astype(np.float64)
        pos_left = np.cumsum(y[order])[boundaries]
        lower, upper = ordered[boundaries], ordered[boundaries + 1]

    n = float(len(column))
    p = float(y.sum())
    scores = split_score(n_left, pos_left, n - n_left, p - pos_left)
    best = int(np.argmax(scores))
    return (float(lower[best]) + float(upper[best])) / 2, float(scores[best])


def choose(splits: list[Split]) -> Split | None:
    # ties go to the lowest feature index; feature_split already picked the lowest threshold
    if not splits:
        return None
    return max(splits, key=lambda split: (split.score, -split.feature))


def best_split(X: np.ndarray, y: np.ndarray, features) -> Split | None:
    y = np.asarray(y, dtype=np.float64)
    splits = []
    for feature in features:
        found = feature_split(X[:, feature], y)
        if found is not None:
            splits.append(Split(int(feature), *found))
    return choose(splits)


def grow_tree(X: np.ndarray, y: np.ndarray, seed, max_features: int) -> Tree:
    """
    One tree on a bootstrap resample of (X, y), grown until every leaf is pure
    or cannot be split. Each node looks at the first `max_features` features
    of a fresh permutation that are not constant inside the node.
    """
    rng = np.random.default_rng(seed)
    n, d = X.shape
    sample = rng.integers(0, n, n)
    Xb = np.asfortranarray(X[sample])
    yb = y[sample].astype(np.float64)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        for column, fill in ((feature, LEAF), (threshold, 0.0), (left, LEAF), (right, LEAF), (value, 0.0)):
            column.append(fill)
        return len(feature) - 1

    stack = [(new_node(), np.arange(n))]
    while stack:
        node, rows = stack.pop()
        labels = yb[rows]
        positives = labels.sum()
        value[node] = float(positives / len(rows))
        if positives == 0 or positives == len(rows) or len(rows) < 2:
            continue

        splits = []
        for candidate in rng.permutation(d):
            found = feature_split(Xb[rows, candidate], labels)
            if found is None:
                continue
            splits.append(Split(int(candidate), *found))
            if len(splits) == max_features:
                break
        best = choose(splits)
        if best is None:
            continue

        goes_left = Xb[rows, best.feature] <= best.threshold
        feature[node], threshold[node] = best.feature, best.threshold
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], rows[~goes_left]))
        stack.append((left[node], rows[goes_left]))

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def candidate_count(n_features: int) -> int:
    return max(math.isqrt(n_features), 1)


def train_forest(
    X,
    y,
    seed: int = 0,
    n_estimators: int = DEFAULT_ESTIMATORS,
    workers: int = 1,
) -> ForestModel:
    X = np.asarray(X)
    y = np.asarray(y).astype(np.uint8)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"Feature matrix {X.shape} does not match {len(y)} labels")
    n_positive = int(y.sum())
    if n_positive == 0 or n_positive == len(y):
        raise SingleClassData(f"Training data holds a single class ({len(y)} samples, {n_positive} positive)")

    max_features = candidate_count(X.shape[1])
    seeds = np.random.SeedSequence(seed).spawn(n_estimators)
    trees = Parallel(n_jobs=workers)(delayed(grow_tree)(X, y, s, max_features) for s in seeds)

    meta = {
        "n_samples": len(y),
        "n_positive": n_positive,
        "n_negative": len(y) - n_positive,
        "positive_ratio": round(n_positive / len(y), 6),
        "max_features": max_features,
    }
    log.info(
        "forest: %d trees on %d samples (%d positive), %d nodes",
        n_estimators, len(y), n_positive, sum(tree.n_nodes for tree in trees),
    )
    return ForestModel(list(trees), n_estimators, seed, X.shape[1], meta)

