"""
Exhaustive IV and key search. Every 8-byte aligned offset of the search
space is an IV candidate, and for each IV every aligned offset is a key
candidate; the first pair that decrypts the packet into a well formed
binary packet wins.

Probes run in IV blocks: one AES key schedule per candidate key decrypts the
packet head under a whole block of IVs at once. Results and probe counts are
those of the one-pair-at-a-time loop.
"""
from __future__ import annotations
import logging
import time
from enum import StrEnum
from typing import NamedTuple, Self

import numpy as np
from joblib import Parallel, delayed

from src.ciphers import CipherSpec
from src.errors import ConfigError
from src.heap import (
    ROW_LEN,
    CandidateRegion,
    HeapSnapshot,
    RegionOrigin,
    SliceSample,
    total_bytes,
)
from src.packets import ProbeBatch, ValidationPacket
from src.slices import slice_regions

log = logging.getLogger(__name__)

IV_BLOCK = 512


class SearchSource(StrEnum):
    FULL_HEAP = "full-heap"
    PAGE_FILTERED = "page-filtered"
    CLASSIFIER_SLICES = "classifier-slices"


class SearchSpace(NamedTuple):
    regions: list[CandidateRegion]
    source: SearchSource

    @classmethod
    def full_heap(cls, heap: HeapSnapshot) -> Self:
        return cls([CandidateRegion(0, heap.size, RegionOrigin.FULL_HEAP)], SearchSource.FULL_HEAP)

    @classmethod
    def page_filtered(cls, regions: list[CandidateRegion]) -> Self:
        return cls(regions, SearchSource.PAGE_FILTERED)

    @property
    def total_bytes(self) -> int:
        return total_bytes(self.regions)


class SearchOptions(NamedTuple):
    literal_outer_advance: bool = False
    workers: int = 1
    iv_block: int = IV_BLOCK


class KeyMatch(NamedTuple):
    iv_offset: int
    key_offset: int
    iv: bytes
    key: bytes
    cipher_name: str
    probes_tried: int
    elapsed: float


class NotFound(NamedTuple):
    probes_tried: int
    elapsed: float


def candidate_offsets(regions: list[CandidateRegion], need: int, limit: int) -> np.ndarray:
    """Aligned offsets inside the regions whose `need` byte read stays below `limit`."""
    offsets = [
        np.arange(region.offset + -region.offset % ROW_LEN, region.end, ROW_LEN, dtype=np.int64)
        for region in regions
    ]
    if not offsets:
        return np.zeros(0, dtype=np.int64)
    offsets = np.unique(np.concatenate(offsets))
    return offsets[offsets + need <= limit]


def covered_offsets(slices: list[SliceSample], need: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Aligned offsets whose `need` byte read lies wholly inside the union of the
    slices, plus a buffer holding the slice bytes at their heap offsets.
    """
    end = max(s.end for s in slices)
    buffer = np.zeros(end, dtype=np.uint8)
    covered = np.zeros(end, dtype=bool)
    for s in slices:
        buffer[s.offset : s.end] = np.frombuffer(s.data, dtype=np.uint8)
        covered[s.offset : s.end] = True
    runs = np.concatenate(([0], np.cumsum(covered, dtype=np.int64)))
    starts = np.arange(0, end - need + 1, ROW_LEN, dtype=np.int64)
    inside = runs[starts + need] - runs[starts] == need
    return starts[inside], buffer


def scan_block(batch: ProbeBatch, keys: list[bytes], ivs: np.ndarray, first: int) -> tuple[int, int] | None:
    """Lowest (iv index, key index) that validates inside one IV block."""
    best = None
    for key_index, key in enumerate(keys):
        valid = batch.valid_ivs(key, ivs)
        if valid.any():
            iv_index = first + int(np.argmax(valid))
            if best is None or iv_index < best[0]:
                best = (iv_index, key_index)
            if iv_index == first:
                break
    return best


def search(
    packet: ValidationPacket,
    spec: CipherSpec,
    buffer: np.ndarray,
    iv_offsets: np.ndarray,
    key_offsets: np.ndarray,
    options: SearchOptions = SearchOptions(),
) -> KeyMatch | NotFound:
    started = time.perf_counter()
    batch = ProbeBatch(packet)
    if options.literal_outer_advance:
        # r <- x + 8 leaves the outer loop after one full inner sweep
        iv_offsets = iv_offsets[:1]
    n_keys = len(key_offsets)
    if not len(iv_offsets) or not n_keys:
        return NotFound(0, time.perf_counter() - started)

    keys = [buffer[offset : offset + spec.key_len].tobytes() for offset in key_offsets]
    ivs = buffer[iv_offsets[:, None] + np.arange(spec.iv_len)]
    blocks = range(0, len(ivs), options.iv_block)
    log.info(
        "search %s: %d IV x %d key candidates, %d workers",
        spec.name, len(iv_offsets), n_keys, options.workers,
    )

    if options.workers > 1:
        # ordered results: the first block with a hit holds the lowest pair
        results = Parallel(n_jobs=options.workers, return_as="generator")(
            delayed(scan_block)(batch, keys, ivs[first : first + options.iv_block], first)
            for first in blocks
        )
    else:
        results = (scan_block(batch, keys, ivs[first : first + options.iv_block], first) for first in blocks)

    hit = next((found for found in results if found is not None), None)
    elapsed = time.perf_counter() - started
    if hit is None:
        log.info("search %s: exhausted after %d probes", spec.name, len(iv_offsets) * n_keys)
        return NotFound(len(iv_offsets) * n_keys, elapsed)

    iv_index, key_index = hit
    iv_offset, key_offset = int(iv_offsets[iv_index]), int(key_offsets[key_index])
    match = KeyMatch(
        iv_offset,
        key_offset,
        ivs[iv_index].tobytes(),
        keys[key_index],
        spec.name,
        iv_index * n_keys + key_index + 1,
        elapsed,
    )
    log.info("search %s: IV at %#x, key at %#x after %d probes", spec.name, iv_offset, key_offset, match.probes_tried)
    return match


def check_cipher(packet: ValidationPacket, spec: CipherSpec):
    if packet.spec.name != spec.name:
        raise ConfigError(f"Packet was captured under {packet.cipher_name}, search asks for {spec.name}")


def find_iv_and_key(
    packet: ValidationPacket,
    space: SearchSpace,
    heap: HeapSnapshot,
    spec: CipherSpec,
    options: SearchOptions = SearchOptions(),
) -> KeyMatch | NotFound:
    """Candidate reads may run past a region into the heap but never past its end."""
    check_cipher(packet, spec)
    ProbeBatch(packet)
    iv_offsets = candidate_offsets(space.regions, spec.iv_len, heap.size)
    key_offsets = candidate_offsets(space.regions, spec.key_len, heap.size)
    return search(packet, spec, heap.as_array(), iv_offsets, key_offsets, options)


def find_in_slices(
    packet: ValidationPacket,
    slices: list[SliceSample],
    spec: CipherSpec,
    options: SearchOptions = SearchOptions(),
) -> KeyMatch | NotFound:
    """
    IV candidates walk the slices in offset order, key candidates span the
    union of all slices. An offset shared by two overlapping slices is probed
    once.
    """
    check_cipher(packet, spec)
    ProbeBatch(packet)
    if not slices:
        return NotFound(0, 0.0)
    slices = sorted(slices, key=lambda s: s.offset)
    iv_offsets, buffer = covered_offsets(slices, spec.iv_len)
    key_offsets, _ = covered_offsets(slices, spec.key_len)
    return search(packet, spec, buffer, iv_offsets, key_offsets, options)


def slice_space(slices: list[SliceSample]) -> SearchSpace:
    return SearchSpace(slice_regions(slices), SearchSource.CLASSIFIER_SLICES)
