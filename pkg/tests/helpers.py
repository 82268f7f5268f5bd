import numpy as np

from src.config import RunConfig
from src.forest import LEAF, N_FEATURES, ForestModel, Tree, TreeNode
from src.heap import HeapSnapshot
from src.pipeline import training_set
from src.stacked import META_FEATURES, StackedModel, train_stacked
from src.synthetic import SyntheticBundle, build_synthetic, random_recipe

SMALL_HEAP = 16 * 1024


def bundle_fixture(seed: int = 0, cipher_name: str = "aes128-ctr", heap_size: int = SMALL_HEAP, **kwargs) -> SyntheticBundle:
    return build_synthetic(random_recipe(seed, cipher_name, heap_size, **kwargs))


def small_corpus(seeds, heap_size: int = SMALL_HEAP):
    ciphers = ("aes128-ctr", "aes192-ctr", "aes256-ctr")
    return [bundle_fixture(seed, ciphers[seed % 3], heap_size).entry for seed in seeds]


def train_small_model(entries, seed: int = 0) -> StackedModel:
    X, y = training_set(entries, RunConfig())
    return train_stacked(X, y, seed=seed)


def heap_fixture(raw: bytes, base_addr: int = 0) -> HeapSnapshot:
    return HeapSnapshot.from_bytes(raw, base_addr)


def constant_forest(probability: float, n_features: int) -> ForestModel:
    leaf = Tree.from_nodes([TreeNode(LEAF, 0.0, LEAF, LEAF, probability)])
    return ForestModel([leaf], n_estimators=1, n_features=n_features)


def always_model(probability: float) -> StackedModel:
    """A stack whose every member answers `probability` for any slice."""
    return StackedModel(
        constant_forest(probability, N_FEATURES),
        constant_forest(probability, N_FEATURES),
        constant_forest(probability, META_FEATURES),
    )


def random_rows(n: int, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, (n, N_FEATURES), dtype=np.uint8)
