from __future__ import annotations
import logging
from typing import Iterable, NamedTuple, Self

import numpy as np

from src.dataset import DatasetEntry
from src.heap import KeyRole, SliceSample
from src.slices import slice_matrix
from src.stacked import Classifier, StackedModel

log = logging.getLogger(__name__)

# IVs and encryption keys of both directions; MAC keys are not counted
RETRIEVED_ROLES = (KeyRole.A, KeyRole.B, KeyRole.C, KeyRole.D)


class ConfusionCounts(NamedTuple):
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, predicted, labels) -> Self:
        predicted = np.asarray(predicted, dtype=bool)
        labels = np.asarray(labels, dtype=bool)
        return cls(
            tp=int((predicted & labels).sum()),
            fp=int((predicted & ~labels).sum()),
            tn=int((~predicted & ~labels).sum()),
            fn=int((~predicted & labels).sum()),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(*(a + b for a, b in zip(self, other)))


class Metrics(NamedTuple):
    """Percentages rounded to 2 decimals; None where the denominator is zero."""
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None


def percent(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return round(100.0 * numerator / denominator, 2)


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    tp, fp, tn, fn = counts
    if 2 * tp + fp + fn:
        f1 = percent(2 * tp, 2 * tp + fp + fn)
    else:
        f1 = None
    return Metrics(
        accuracy=percent(tp + tn, counts.total),
        precision=percent(tp, tp + fp),
        recall=percent(tp, tp + fn),
        f1=f1,
    )


class RetrievalRow(NamedTuple):
    total: int
    retrieved: dict[Classifier, int]


class RetrievalReport(NamedTuple):
    rows: dict[int, RetrievalRow]

    def retrieved(self, key_len: int, classifier: Classifier) -> int:
        return self.rows[key_len].retrieved[classifier]

    def recall(self, key_len: int, classifier: Classifier) -> float | None:
        row = self.rows[key_len]
        return percent(row.retrieved[classifier], row.total)


def overlapping(slices: list[SliceSample], offset: int, length: int) -> np.ndarray:
    return np.array([s.offset < offset + length and offset < s.end for s in slices], dtype=bool)


def retrieval_by_key_length(
    entries: Iterable[DatasetEntry],
    model: StackedModel,
    slicer,
    roles: tuple[KeyRole, ...] = RETRIEVED_ROLES,
) -> RetrievalReport:
    """
    A key counts as retrieved by a classifier when at least one slice it
    predicts positive overlaps the key bytes. `slicer(entry)` returns the
    candidate slices of an entry under the pipeline settings.
    """
    totals: dict[int, int] = {}
    retrieved: dict[int, dict[Classifier, int]] = {}
    for entry in entries:
        slices = slicer(entry)
        X = slice_matrix(slices)
        positives = {
            classifier: model.classify(X, classifier) if len(slices) else np.zeros(0, dtype=bool)
            for classifier in Classifier
        }
        for annotation in entry.annotations:
            if annotation.role not in roles:
                continue
            totals[annotation.length] = totals.get(annotation.length, 0) + 1
            counts = retrieved.setdefault(annotation.length, {classifier: 0 for classifier in Classifier})
            hits = overlapping(slices, annotation.offset, annotation.length)
            for classifier, predicted in positives.items():
                if len(slices) and (hits & predicted).any():
                    counts[classifier] += 1
    return RetrievalReport(
        {key_len: RetrievalRow(totals[key_len], retrieved[key_len]) for key_len in sorted(totals)}
    )
