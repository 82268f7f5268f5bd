from __future__ import annotations
import logging

import numpy as np
from sklearn.neighbors import NearestNeighbors

from src.errors import DataError, SingleClassData, TooFewMinority

log = logging.getLogger(__name__)

DEFAULT_NEIGHBOURS = 5
# synthetic rows are built in blocks to bound the float64 working set
BLOCK = 8192


def minority_label(y: np.ndarray) -> int:
    counts = np.bincount(y, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise SingleClassData(f"Cannot oversample a single class ({len(y)} samples)")
    return int(counts[1] <= counts[0])


def smote_oversample(
    X,
    y,
    k_neighbors: int = DEFAULT_NEIGHBOURS,
    target_ratio: float = 1.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Interpolates new minority rows between a minority row and one of its k
    nearest minority neighbours (Euclidean) until minority:majority reaches
    target_ratio. Synthetic rows are rounded and clamped to byte values and
    appended after the original rows.
    """
    X = np.asarray(X)
    y = np.asarray(y).astype(np.uint8)
    if X.ndim != 2 or len(X) != len(y):
        raise DataError(f"Feature matrix {X.shape} does not match {len(y)} labels")

    label = minority_label(y)
    minority = X[y == label]
    n_majority = int((y != label).sum())
    if len(minority) < k_neighbors + 1:
        raise TooFewMinority(
            f"SMOTE with k={k_neighbors} needs at least {k_neighbors + 1} minority rows. Got {len(minority)}"
        )

    n_new = max(round(target_ratio * n_majority) - len(minority), 0)
    if n_new == 0:
        return X, y

    points = minority.astype(np.float64)
    # without a query argument a row is never its own neighbour
    neighbours = NearestNeighbors(n_neighbors=k_neighbors, algorithm="brute").fit(points).kneighbors(
        return_distance=False
    )

    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(points), n_new)
    partner = neighbours[base, rng.integers(0, k_neighbors, n_new)]
    gap = rng.random((n_new, 1))

    synthetic = np.empty((n_new, X.shape[1]), dtype=X.dtype)
    for start in range(0, n_new, BLOCK):
        stop = start + BLOCK
        x, n = points[base[start:stop]], points[partner[start:stop]]
        synthetic[start:stop] = np.clip(np.rint(x + gap[start:stop] * (n - x)), 0, 255)

    log.info(
        "smote: %d minority rows + %d synthetic against %d majority (k=%d)",
        len(minority), n_new, n_majority, k_neighbors,
    )
    X_out = np.concatenate([X, synthetic])
    y_out = np.concatenate([y, np.full(n_new, label, dtype=np.uint8)])
    return X_out, y_out
