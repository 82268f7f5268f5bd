from __future__ import annotations
import logging

import numpy as np

from src.errors import ConfigError, HeapSmallerThanWindow
from src.filters import RowMarks
from src.heap import (
    ROW_LEN,
    CandidateRegion,
    HeapSnapshot,
    KeyAnnotation,
    RegionOrigin,
    SliceSample,
    merge_regions,
)

log = logging.getLogger(__name__)

WINDOW = 128
STRIDE = 64


def check_geometry(window: int, stride: int):
    if window <= 0 or window % ROW_LEN:
        raise ConfigError(f"Window must be a positive multiple of 8. Got {window}")
    if stride <= 0 or stride % ROW_LEN:
        raise ConfigError(f"Stride must be a positive multiple of 8. Got {stride}")
    if stride > window:
        raise ConfigError(f"Stride {stride} is larger than window {window}")


def window_offsets(length: int, window: int = WINDOW, stride: int = STRIDE) -> list[int]:
    """Offsets 0, stride, 2 * stride, ... with a last window anchored to the end."""
    if length < window:
        raise HeapSmallerThanWindow(f"Heap of {length} bytes is smaller than the {window} byte window")
    offsets = list(range(0, length - window + 1, stride))
    if offsets[-1] + window < length:
        offsets.append(length - window)
    return offsets


def label_for(offset: int, window: int, annotations: list[KeyAnnotation]) -> int:
    return int(any(annotation.overlaps(offset, window) for annotation in annotations))


def extract_slices(
    heap: HeapSnapshot,
    marks: RowMarks,
    annotations: list[KeyAnnotation] | None = None,
    window: int = WINDOW,
    stride: int = STRIDE,
) -> list[SliceSample]:
    check_geometry(window, stride)
    # prefix sums over r make "any marked row inside the window" O(1)
    marked = np.concatenate(([0], np.cumsum(marks.r, dtype=np.int64)))
    rows_per_window = window // ROW_LEN

    slices = []
    for offset in window_offsets(heap.size, window, stride):
        first_row = offset // ROW_LEN
        if marked[first_row + rows_per_window] - marked[first_row] == 0:
            continue
        label = None if annotations is None else label_for(offset, window, annotations)
        slices.append(SliceSample(offset, heap.read(offset, window), label))

    log.debug("%s: %d slices from %d rows", heap.source_path or "heap", len(slices), marks.n_rows)
    return slices


def slice_matrix(slices: list[SliceSample]) -> np.ndarray:
    if not slices:
        return np.zeros((0, WINDOW), dtype=np.uint8)
    return np.frombuffer(b"".join(s.data for s in slices), dtype=np.uint8).reshape(len(slices), -1)


def slice_labels(slices: list[SliceSample]) -> np.ndarray:
    return np.array([s.label for s in slices], dtype=np.uint8)


def slice_regions(slices: list[SliceSample]) -> list[CandidateRegion]:
    return merge_regions([(s.offset, len(s.data)) for s in slices], RegionOrigin.CLASSIFIER)
