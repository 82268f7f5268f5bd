from __future__ import annotations
import logging
import math
from typing import NamedTuple, Self

import numpy as np

from src.errors import ConfigError, MatrixTooSmall
from src.heap import (
    PAGE_LEN,
    ROW_LEN,
    CandidateRegion,
    HeapSnapshot,
    RegionOrigin,
    merge_regions,
)
from src.square import Square

log = logging.getLogger(__name__)

POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)

DEFAULT_PAGE_THRESHOLD = 0.4
MIN_DIFFERING = 4


class MaskOptions(NamedTuple):
    bitwise_and: bool = False
    printed_polarity: bool = False


class HeapMatrix(NamedTuple):
    rows: np.ndarray

    @classmethod
    def from_heap(cls, heap: HeapSnapshot) -> Self:
        return cls(heap.as_array().reshape(-1, ROW_LEN))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


class DiffMask(NamedTuple):
    values: np.ndarray


class RowMarks(NamedTuple):
    z: np.ndarray
    r: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.r)


def page_hamming_means(heap: HeapSnapshot, page_len: int = PAGE_LEN) -> np.ndarray:
    """Mean popcount(b[i] ^ b[i+1]) over the consecutive byte pairs inside each page."""
    data = heap.as_array()
    if len(data) < 2:
        return np.zeros(1 if len(data) else 0)
    pair_bits = POPCOUNT[data[:-1] ^ data[1:]]
    means = []
    for start in range(0, len(data), page_len):
        end = min(start + page_len, len(data))
        pairs = pair_bits[start : end - 1]
        means.append(float(pairs.mean()) if len(pairs) else 0.0)
    return np.array(means)


def page_filter(
    heap: HeapSnapshot,
    page_len: int = PAGE_LEN,
    threshold: float = DEFAULT_PAGE_THRESHOLD,
) -> list[CandidateRegion]:
    if page_len <= 0 or page_len % ROW_LEN:
        raise ConfigError(f"Page length must be a positive multiple of 8. Got {page_len}")
    if not heap.data:
        return []

    means = page_hamming_means(heap, page_len)
    spans = [
        (page * page_len, min(page_len, heap.size - page * page_len))
        for page, mean in enumerate(means)
        if mean >= threshold * 8
    ]
    regions = merge_regions(spans, RegionOrigin.PAGE_FILTER)
    log.debug(
        "page filter kept %d of %d pages (%d bytes)",
        len(spans), len(means), sum(length for _, length in spans),
    )
    return regions


def diff_mask(matrix: HeapMatrix, bitwise: bool = False) -> DiffMask:
    """
    Neighbour difference test over the N x 8 matrix. A cell is True when it
    differs from both its right and its lower neighbour. The last column only
    has a lower neighbour and the last row only a right one; the bottom right
    cell has neither and is False.
    """
    x = matrix.rows
    if matrix.n_rows < 2:
        raise MatrixTooSmall(f"Need at least 2 rows for the difference mask. Got {matrix.n_rows}")

    wide = x.astype(np.int16)
    horizontal = np.abs(wide[:, :-1] - wide[:, 1:])
    vertical = np.abs(wide[:-1, :] - wide[1:, :])

    y = np.zeros(x.shape, dtype=bool)
    if bitwise:
        y[:-1, :-1] = (horizontal[:-1] & vertical[:, :-1]) != 0
    else:
        y[:-1, :-1] = (horizontal[:-1] != 0) & (vertical[:, :-1] != 0)
    y[:-1, -1] = vertical[:, -1] != 0
    y[-1, :-1] = horizontal[-1] != 0
    return DiffMask(y)


def mark_rows(mask: DiffMask, printed_polarity: bool = False) -> RowMarks:
    y = mask.values
    counted = ~y if printed_polarity else y
    z = counted.sum(axis=1) >= MIN_DIFFERING
    r = np.zeros_like(z)
    r[:-1] = z[:-1] & z[1:]
    return RowMarks(z, r)


def entropy_marks(heap: HeapSnapshot, options: MaskOptions = MaskOptions()) -> RowMarks:
    mask = diff_mask(HeapMatrix.from_heap(heap), bitwise=options.bitwise_and)
    return mark_rows(mask, printed_polarity=options.printed_polarity)


def run_bounds(flags: np.ndarray) -> list[tuple[int, int]]:
    """(start, stop) of every run of True values."""
    padded = np.concatenate(([False], flags.astype(bool), [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def min_run_for_key(min_len: int) -> int:
    # a key over k rows leaves k - 1 ones in r
    return max(math.ceil(min_len / ROW_LEN) - 1, 1)


def min_key_run_filter(marks: RowMarks, min_len: int) -> RowMarks:
    if min_len <= 0:
        raise ConfigError(f"Minimum key length must be positive. Got {min_len}")
    needed = min_run_for_key(min_len)
    r = marks.r.copy()
    for start, stop in run_bounds(r):
        if stop - start < needed:
            r[start:stop] = False
    return RowMarks(marks.z, r)


def marked_regions(marks: RowMarks) -> list[CandidateRegion]:
    # r[i] vouches for rows i and i + 1
    spans = [
        (start * ROW_LEN, (stop + 1 - start) * ROW_LEN)
        for start, stop in run_bounds(marks.r)
    ]
    return merge_regions(spans, RegionOrigin.ENTROPY_MASK)


def reference_diff_mask(rows: np.ndarray, bitwise: bool = False) -> np.ndarray:
    """Cell by cell rendition of diff_mask, kept as the oracle for the vectorised one."""
    n_rows, width = rows.shape
    y = np.zeros((n_rows, width), dtype=bool)
    for i in range(n_rows):
        for j, square in enumerate(Square.iter_row(rows, i)):
            y[i][j] = square.differs(bitwise)
    return y


def reference_mark_rows(y: np.ndarray, printed_polarity: bool = False) -> RowMarks:
    n_rows = len(y)
    z = np.zeros(n_rows, dtype=bool)
    for i in range(n_rows):
        count = 0
        for cell in y[i]:
            if bool(cell) != printed_polarity:
                count += 1
        z[i] = count >= MIN_DIFFERING
    r = np.zeros(n_rows, dtype=bool)
    for i in range(n_rows - 1):
        r[i] = z[i] and z[i + 1]
    return RowMarks(z, r)
