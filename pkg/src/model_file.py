"""
Model files are UTF-8 text of three lines:

    KEYHUNT-MODEL 1
    {"decision_threshold": ..., "high_precision": {...}, ...}
    CHECKSUM <16 hex digits>

The middle line is a JSON document with sorted keys. Every tree is a flat
list of [feature_index, threshold, left, right, leaf_probability] nodes.
The checksum is an 8 byte BLAKE2b digest of the JSON line.
"""
from __future__ import annotations
import hashlib
import json
import logging
from pathlib import Path

from src.errors import CorruptModel, ModelNotFound
from src.forest import ForestModel, Tree, TreeNode
from src.stacked import StackedModel

log = logging.getLogger(__name__)

MAGIC = "KEYHUNT-MODEL"
FORMAT_VERSION = 1
CHECKSUM_PREFIX = "CHECKSUM "
MEMBERS = ("high_precision", "high_recall", "meta")


def checksum(body: str) -> str:
    return hashlib.blake2b(body.encode(), digest_size=8).hexdigest()


def forest_document(forest: ForestModel) -> dict:
    return {
        "n_estimators": forest.n_estimators,
        "n_features": forest.n_features,
        "rng_seed": forest.rng_seed,
        "training_meta": forest.training_meta or {},
        "trees": [[list(node) for node in tree.nodes()] for tree in forest.trees],
    }


def forest_from_document(document: dict) -> ForestModel:
    trees = [Tree.from_nodes([TreeNode(*node) for node in nodes]) for nodes in document["trees"]]
    return ForestModel(
        trees,
        int(document["n_estimators"]),
        int(document["rng_seed"]),
        int(document["n_features"]),
        document["training_meta"],
    )


def dumps_model(model: StackedModel) -> str:
    document = {member: forest_document(getattr(model, member)) for member in MEMBERS}
    document["decision_threshold"] = model.decision_threshold
    document["training_meta"] = model.training_meta or {}
    body = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return f"{MAGIC} {FORMAT_VERSION}\n{body}\n{CHECKSUM_PREFIX}{checksum(body)}\n"


def loads_model(text: str, source: str = "<memory>") -> StackedModel:
    lines = text.split("\n")
    if len(lines) < 3 or not lines[0].startswith(f"{MAGIC} "):
        raise CorruptModel(f"{source}: not a model file")
    if lines[0] != f"{MAGIC} {FORMAT_VERSION}":
        raise CorruptModel(f"{source}: unsupported format {lines[0]!r}")
    body, trailer = lines[1], lines[2]
    if not trailer.startswith(CHECKSUM_PREFIX) or trailer[len(CHECKSUM_PREFIX) :] != checksum(body):
        raise CorruptModel(f"{source}: checksum mismatch")
    try:
        document = json.loads(body)
        members = {member: forest_from_document(document[member]) for member in MEMBERS}
        return StackedModel(
            decision_threshold=float(document["decision_threshold"]),
            training_meta=document["training_meta"],
            **members,
        )
    except (KeyError, TypeError, ValueError) as err:
        raise CorruptModel(f"{source}: {err}") from err


def save_model(model: StackedModel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_model(model))
    log.info("model written to %s", path)
    return path


def load_model(path: str | Path) -> StackedModel:
    path = Path(path)
    try:
        text = path.read_bytes().decode()
    except FileNotFoundError:
        raise ModelNotFound(f"No model file at {path}") from None
    except UnicodeDecodeError as err:
        raise CorruptModel(f"{path}: {err}") from err
    return loads_model(text, str(path))
