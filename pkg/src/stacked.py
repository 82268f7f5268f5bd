from __future__ import annotations
import logging
from enum import StrEnum
from typing import NamedTuple

import numpy as np

from src.errors import DataError, SingleClassData, UntrainedModel
from src.forest import DEFAULT_ESTIMATORS, ForestModel, train_forest
from src.smote import DEFAULT_NEIGHBOURS, smote_oversample

log = logging.getLogger(__name__)

DEFAULT_HOLDOUT = 0.25
DEFAULT_THRESHOLD = 0.5
META_FEATURES = 2


class Classifier(StrEnum):
    STACKED = "stacked"
    HIGH_RECALL = "high-recall"
    HIGH_PRECISION = "high-precision"


class HoldoutSplit(NamedTuple):
    base: np.ndarray
    holdout: np.ndarray


class StackedModel(NamedTuple):
    high_precision: ForestModel
    high_recall: ForestModel
    meta: ForestModel
    decision_threshold: float = DEFAULT_THRESHOLD
    training_meta: dict | None = None
    # row indices of the training set; kept in memory only
    split: HoldoutSplit | None = None

    def base_features(self, X) -> np.ndarray:
        return np.column_stack([self.high_precision.predict_proba(X), self.high_recall.predict_proba(X)])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.base_features(X))

    def member_proba(self, X, classifier: Classifier = Classifier.STACKED) -> np.ndarray:
        match Classifier(classifier):
            case Classifier.HIGH_PRECISION:
                return self.high_precision.predict_proba(X)
            case Classifier.HIGH_RECALL:
                return self.high_recall.predict_proba(X)
            case _:
                return self.predict_proba(X)

    def classify(self, X, classifier: Classifier = Classifier.STACKED) -> np.ndarray:
        return self.member_proba(X, classifier) >= self.decision_threshold


def holdout_split(y: np.ndarray, fraction: float, rng: np.random.Generator) -> HoldoutSplit:
    """Stratified: each class gives `fraction` of its rows (at least one) to the holdout."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"Holdout fraction must lie in (0, 1). Got {fraction}")
    holdout = []
    for label in (0, 1):
        rows = np.flatnonzero(y == label)
        if len(rows) < 2:
            raise SingleClassData(f"Class {label} has {len(rows)} rows; cannot split base and holdout")
        n_holdout = min(max(round(len(rows) * fraction), 1), len(rows) - 1)
        holdout.append(rng.choice(rows, size=n_holdout, replace=False))
    holdout = np.sort(np.concatenate(holdout))
    base = np.setdiff1d(np.arange(len(y)), holdout)
    return HoldoutSplit(base, holdout)


def train_stacked(
    X,
    y,
    holdout_fraction: float = DEFAULT_HOLDOUT,
    seed: int = 0,
    n_estimators: int = DEFAULT_ESTIMATORS,
    k_neighbors: int = DEFAULT_NEIGHBOURS,
    target_ratio: float = 1.0,
    decision_threshold: float = DEFAULT_THRESHOLD,
    workers: int = 1,
) -> StackedModel:
    """
    High precision forest on the imbalanced base rows, high recall forest on
    the same rows after SMOTE, meta forest on the two probabilities the base
    forests give for the disjoint holdout rows.
    """
    X = np.asarray(X)
    y = np.asarray(y).astype(np.uint8)
    split_seed, hp_seed, smote_seed, hr_seed, meta_seed = (
        int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(5)
    )
    split = holdout_split(y, holdout_fraction, np.random.default_rng(split_seed))
    X_base, y_base = X[split.base], y[split.base]
    X_hold, y_hold = X[split.holdout], y[split.holdout]

    high_precision = train_forest(X_base, y_base, hp_seed, n_estimators, workers)
    X_over, y_over = smote_oversample(X_base, y_base, k_neighbors, target_ratio, smote_seed)
    high_recall = train_forest(X_over, y_over, hr_seed, n_estimators, workers)

    partial = StackedModel(high_precision, high_recall, meta=ForestModel([], n_features=META_FEATURES))
    meta = train_forest(partial.base_features(X_hold), y_hold, meta_seed, n_estimators, workers)

    training_meta = {
        "seed": seed,
        "seeds": {
            "split": split_seed,
            "high_precision": hp_seed,
            "smote": smote_seed,
            "high_recall": hr_seed,
            "meta": meta_seed,
        },
        "holdout_fraction": holdout_fraction,
        "n_base": len(split.base),
        "n_holdout": len(split.holdout),
        "smote_k_neighbors": k_neighbors,
        "smote_target_ratio": target_ratio,
        "n_oversampled": len(y_over),
        "meta_training": "holdout",
    }
    log.info(
        "stacked model: %d base rows, %d holdout rows, %d rows after smote",
        len(split.base), len(split.holdout), len(y_over),
    )
    return StackedModel(high_precision, high_recall, meta, decision_threshold, training_meta, split)


def predict(model: StackedModel | ForestModel | None, sample) -> float | np.ndarray:
    """
    Probability of the positive class. A stacked model answers with its meta
    forest; a single vector gives a float, a batch an array.
    """
    if model is None:
        raise UntrainedModel("No model")
    probabilities = model.predict_proba(sample)
    if np.asarray(sample).ndim == 1:
        return float(probabilities[0])
    return probabilities
