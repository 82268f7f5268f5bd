import numpy as np
import pytest

from src.errors import DataError, SingleClassData, UntrainedModel
from src.forest import (
    LEAF,
    ForestModel,
    best_split,
    candidate_count,
    feature_split,
    split_score,
    train_forest,
)
from src.model_file import dumps_model
from src.stacked import StackedModel, predict
from tests.helpers import constant_forest


def separable_fixture(n_pos: int = 40, n_neg: int = 200, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = np.concatenate([
        rng.integers(200, 256, (n_pos, 128), dtype=np.uint8),
        rng.integers(0, 51, (n_neg, 128), dtype=np.uint8),
    ])
    y = np.zeros(n_pos + n_neg, dtype=np.uint8)
    y[:n_pos] = 1
    return X, y


def gini(labels: np.ndarray) -> float:
    if not len(labels):
        return 0.0
    p = labels.mean()
    return 1.0 - p * p - (1 - p) * (1 - p)


def weighted_gini(column: np.ndarray, y: np.ndarray, threshold: float) -> float:
    left, right = y[column <= threshold], y[column > threshold]
    return (len(left) * gini(left) + len(right) * gini(right)) / len(y)


def reference_impurity(column: np.ndarray, y: np.ndarray) -> float:
    """Lowest weighted Gini over every midpoint threshold, computed the slow way."""
    values = np.unique(column)
    return min(
        weighted_gini(column, y, (float(lower) + float(upper)) / 2)
        for lower, upper in zip(values[:-1], values[1:])
    )


@pytest.mark.parametrize(["dtype"], (
    (np.uint8,),
    (np.float64,),
))
def test_feature_split_minimises_gini(dtype):
    rng = np.random.default_rng(21)
    for trial in range(30):
        column = rng.integers(0, 12, 60).astype(dtype)
        y = rng.integers(0, 2, 60).astype(np.float64)
        if len(np.unique(column)) < 2:
            continue

        threshold, score = feature_split(column, y)
        expected = reference_impurity(column, y)

        # weighted gini == 1 - score / n
        impurity = 1.0 - score / len(y)
        assert abs(impurity - expected) < 1e-9, f"{trial=} {impurity=} {expected=}"
        assert abs(weighted_gini(column, y, threshold) - expected) < 1e-9, f"{trial=} {threshold=}"
        assert threshold != int(threshold), f"{threshold=} is not a midpoint"


def test_constant_feature_has_no_split():
    assert feature_split(np.full(10, 3, dtype=np.uint8), np.arange(10) % 2.0) is None


def test_split_score_of_pure_split():
    assert split_score(5, 5, 5, 0) == 10.0


def test_ties_go_to_lowest_feature():
    X = np.array([[0, 0], [0, 0], [9, 9], [9, 9]], dtype=np.uint8)
    y = np.array([0, 0, 1, 1])

    split = best_split(X, y, [1, 0])

    assert (split.feature, split.threshold) == (0, 4.5)


def test_separable_data():
    # Arrange
    X, y = separable_fixture()

    # Act
    forest = train_forest(X, y, seed=3)

    # Assert
    accuracy = ((forest.predict_proba(X) >= 0.5) == y).mean()
    assert accuracy == 1.0, f"{accuracy=}"
    assert len(forest.trees) == 5
    assert forest.training_meta["max_features"] == candidate_count(128) == 11


def test_same_seed_same_forest():
    X, y = separable_fixture(seed=1)

    first = train_forest(X, y, seed=9)
    second = train_forest(X, y, seed=9, workers=2)

    assert [t.nodes() for t in first.trees] == [t.nodes() for t in second.trees]


def test_different_seed_different_forest():
    X, y = separable_fixture(seed=1)

    first = train_forest(X, y, seed=1)
    second = train_forest(X, y, seed=2)

    assert [t.nodes() for t in first.trees] != [t.nodes() for t in second.trees]


def test_leaves_hold_class_fractions():
    X, y = separable_fixture()

    forest = train_forest(X, y, seed=0, n_estimators=1)

    tree = forest.trees[0]
    leaves = tree.value[tree.feature == LEAF]
    # grown until pure
    assert set(np.unique(leaves)) <= {0.0, 1.0}
    assert (predict(forest, X[:5]) == 1.0).all()


def test_batch_and_single_predictions_agree():
    X, y = separable_fixture()
    forest = train_forest(X, y, seed=4)
    rows = np.random.default_rng(0).integers(0, 256, (20, 128), dtype=np.uint8)

    batch = predict(forest, rows)
    single = [predict(forest, row) for row in rows]

    assert batch.tolist() == single


def test_all_zero_slice_is_negative():
    # Arrange
    rng = np.random.default_rng(2)
    positives = rng.integers(1, 256, (30, 128), dtype=np.uint8)
    negatives = np.zeros((300, 128), dtype=np.uint8)
    negatives[::2, rng.integers(0, 128)] = 7
    X = np.concatenate([positives, negatives])
    y = np.array([1] * 30 + [0] * 300)

    # Act
    forest = train_forest(X, y, seed=0)

    # Assert
    assert predict(forest, np.zeros(128, dtype=np.uint8)) < 0.5


def test_single_class():
    with pytest.raises(SingleClassData):
        train_forest(np.zeros((5, 128), dtype=np.uint8), np.ones(5))


def test_shape_mismatch():
    with pytest.raises(DataError):
        train_forest(np.zeros((5, 128), dtype=np.uint8), np.array([0, 1]))
    forest = constant_forest(0.3, 128)
    with pytest.raises(DataError):
        forest.predict_proba(np.zeros((2, 64)))


def test_untrained():
    with pytest.raises(UntrainedModel):
        ForestModel([]).predict_proba(np.zeros((1, 128)))
    with pytest.raises(UntrainedModel):
        predict(None, np.zeros(128))


def test_forest_predictions_feed_a_stack():
    X, y = separable_fixture()
    forest = train_forest(X, y, seed=0)
    stack = StackedModel(forest, forest, constant_forest(1.0, 2))

    assert (predict(stack, X) == 1.0).all()
    assert dumps_model(stack) == dumps_model(stack)
