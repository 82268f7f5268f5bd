from __future__ import annotations
import logging
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from src.bruteforce import (
    KeyMatch,
    NotFound,
    SearchSpace,
    find_in_slices,
    find_iv_and_key,
)
from src.ciphers import CipherSpec, lookup_cipher, mac_length
from src.config import RunConfig
from src.dataset import DatasetEntry, load_entry
from src.errors import ConfigError
from src.filters import RowMarks, entropy_marks, marked_regions, min_key_run_filter, page_filter
from src.heap import HeapSnapshot, SliceSample, total_bytes
from src.model_file import load_model
from src.packets import ValidationPacket, load_raw_ciphertext
from src.pcap import extract_first_encrypted_packet
from src.slices import extract_slices, slice_labels, slice_matrix
from src.stacked import StackedModel

log = logging.getLogger(__name__)


class Preprocessed(NamedTuple):
    marks: RowMarks
    slices: list[SliceSample]


class Reduction(NamedTuple):
    heap_bytes: int
    clean_bytes: int
    marked_bytes: int
    n_slices: int
    slice_bytes: int


class Classified(NamedTuple):
    slices: list[SliceSample]
    probabilities: np.ndarray
    positives: list[SliceSample]


def preprocess_heap(heap: HeapSnapshot, config: RunConfig, annotations=None) -> Preprocessed:
    marks = entropy_marks(heap, config.mask_options)
    if config.min_key_len:
        marks = min_key_run_filter(marks, config.min_key_len)
    slices = extract_slices(heap, marks, annotations, config.window, config.stride)
    return Preprocessed(marks, slices)


def candidate_slices(heap: HeapSnapshot, config: RunConfig, annotations=None) -> list[SliceSample]:
    return preprocess_heap(heap, config, annotations).slices


def reduction(heap: HeapSnapshot, config: RunConfig) -> Reduction:
    clean = page_filter(heap, threshold=config.page_threshold)
    marks, slices = preprocess_heap(heap, config)
    stats = Reduction(
        heap.size,
        total_bytes(clean),
        total_bytes(marked_regions(marks)),
        len(slices),
        len(slices) * config.window,
    )
    log.debug("%s: %s", heap.source_path or "heap", stats)
    return stats


def training_set(entries: Iterable[DatasetEntry], config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """
    Labelled candidate slices of every entry. With max_slices set, negatives
    are subsampled (seeded) so at most that many rows remain; positives are
    always kept.
    """
    matrices, labels = [], []
    for entry in entries:
        slices = candidate_slices(entry.heap, config, entry.annotations)
        matrices.append(slice_matrix(slices))
        labels.append(slice_labels(slices))
    if not matrices:
        return np.zeros((0, config.window), dtype=np.uint8), np.zeros(0, dtype=np.uint8)
    X, y = np.concatenate(matrices), np.concatenate(labels)

    if config.max_slices and len(y) > config.max_slices:
        rng = np.random.default_rng(config.seed)
        positives = np.flatnonzero(y == 1)
        negatives = np.flatnonzero(y == 0)
        n_keep = max(config.max_slices - len(positives), 0)
        kept = np.sort(np.concatenate([positives, rng.choice(negatives, size=min(n_keep, len(negatives)), replace=False)]))
        X, y = X[kept], y[kept]

    log.info("training set: %d slices, %d positive", len(y), int(y.sum()))
    return X, y


def classify_slices(slices: list[SliceSample], model: StackedModel, config: RunConfig) -> Classified:
    if not slices:
        return Classified([], np.zeros(0), [])
    model = config.thresholded(model)
    probabilities = model.member_proba(slice_matrix(slices), config.classifier)
    positives = [s for s, p in zip(slices, probabilities) if p >= model.decision_threshold]
    return Classified(slices, probabilities, positives)


def classify_heap(heap: HeapSnapshot, model: StackedModel, config: RunConfig) -> Classified:
    return classify_slices(candidate_slices(heap, config), model, config)


def run_brute(
    heap: HeapSnapshot, packet: ValidationPacket, spec: CipherSpec, config: RunConfig
) -> KeyMatch | NotFound:
    space = SearchSpace.page_filtered(page_filter(heap, threshold=config.page_threshold))
    return find_iv_and_key(packet, space, heap, spec, config.search_options)


def run_ml(
    heap: HeapSnapshot,
    packet: ValidationPacket,
    spec: CipherSpec,
    model: StackedModel,
    config: RunConfig,
) -> KeyMatch | NotFound:
    classified = classify_heap(heap, model, config)
    log.info(
        "%d of %d slices predicted positive (%d KB)",
        len(classified.positives), len(classified.slices), len(classified.positives) * config.window // 1024,
    )
    return find_in_slices(packet, classified.positives, spec, config.search_options)


def trailer_len(config: RunConfig, cipher_name: str, mac_name: str | None) -> int:
    if config.mac_len is not None:
        return config.mac_len
    return mac_length(mac_name, lookup_cipher(cipher_name))


def packet_from(
    config: RunConfig, cipher_name: str, mac_name: str | None = None
) -> ValidationPacket:
    if config.pcap:
        return extract_first_encrypted_packet(
            config.pcap,
            cipher_name,
            config.tcp_port,
            config.direction,
            trailer_len(config, cipher_name, mac_name),
        )
    if config.ciphertext:
        return load_raw_ciphertext(config.ciphertext, cipher_name, config.direction)
    raise ConfigError("Extraction needs a packet source: --pcap or --ciphertext")


def sibling_packet(entry: DatasetEntry, config: RunConfig) -> ValidationPacket:
    """The packet stored next to a dataset entry: raw ciphertext first, then the pcap."""
    raw = entry.sibling(f"-{config.direction.short}.bin")
    if raw.exists():
        return load_raw_ciphertext(raw, entry.cipher_name, config.direction)
    capture = entry.sibling(".pcap")
    if capture.exists():
        return extract_first_encrypted_packet(
            capture,
            entry.cipher_name,
            config.tcp_port,
            config.direction,
            trailer_len(config, entry.cipher_name, entry.mac_name),
        )
    raise ConfigError(f"No {raw.name} or {capture.name} next to {entry.json_path}")


class Services:
    """Lazily loaded inputs of one run."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config

    @cached_property
    def model(self) -> StackedModel:
        if not self.config.model:
            raise ConfigError("This command needs --model")
        return self.config.thresholded(load_model(self.config.model))

    @cached_property
    def entry(self) -> DatasetEntry | None:
        if not self.config.json:
            return None
        return load_entry(self.config.json)

    @cached_property
    def heap(self) -> HeapSnapshot:
        if self.entry is not None:
            return self.entry.heap
        if not self.config.heap:
            raise ConfigError("Give a heap with --heap or --json")
        path = Path(self.config.heap)
        return HeapSnapshot.from_bytes(path.read_bytes(), source_path=path)

    @cached_property
    def cipher(self) -> CipherSpec:
        if self.config.cipher:
            return lookup_cipher(self.config.cipher)
        if self.entry is not None:
            return lookup_cipher(self.entry.cipher_name)
        raise ConfigError("Without a JSON log the cipher must be given with --cipher")

    @cached_property
    def packet(self) -> ValidationPacket:
        if self.entry is not None and not (self.config.pcap or self.config.ciphertext):
            return sibling_packet(self.entry, self.config)
        mac_name = self.entry.mac_name if self.entry is not None else None
        return packet_from(self.config, self.cipher.name, mac_name)


def heap_kb(n_bytes: int) -> float:
    return round(n_bytes / 1024, 2)