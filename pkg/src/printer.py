from __future__ import annotations
from itertools import count
from pathlib import Path
from typing import Generator, Iterable, Sequence

import numpy as np
from PIL import Image

from src.filters import RowMarks
from src.heap import PAGE_LEN, ROW_LEN, CandidateRegion, HeapSnapshot, KeyAnnotation, KeyRole

RowStream = Generator[tuple[int, np.ndarray], None, None]

ROWS_PER_LINE = 64
DIMMED = 0.45  # brightness of pages the page filter drops
BLOCK = "█"

Z_TINT = np.array([1.0, 0.35, 0.35])
R_TINT = np.array([0.35, 1.0, 0.35])
IV_TINT = np.array([0.2, 0.85, 0.9])
KEY_TINT = np.array([0.3, 0.45, 1.0])
MAC_TINT = np.array([0.85, 0.35, 0.9])

ROLE_TINTS = {
    KeyRole.A: IV_TINT,
    KeyRole.B: IV_TINT,
    KeyRole.C: KEY_TINT,
    KeyRole.D: KEY_TINT,
    KeyRole.E: MAC_TINT,
    KeyRole.F: MAC_TINT,
}


def key_rows(annotation: KeyAnnotation) -> slice:
    return slice(annotation.offset // ROW_LEN, -(-annotation.end // ROW_LEN))


def heap_map(
    heap: HeapSnapshot,
    marks: RowMarks | None = None,
    annotations: Iterable[KeyAnnotation] = (),
    retained: list[CandidateRegion] | None = None,
) -> np.ndarray:
    """
    One RGB pixel per 8-byte row, ROWS_PER_LINE pixels per line. Grey is the
    mean byte of the row; key rows take the colour of their role over r rows
    green over z rows red.
    """
    rows = heap.as_array().reshape(-1, ROW_LEN)
    n_rows = len(rows)
    grey = rows.mean(axis=1) / 255.0
    # floor so an all-zero row with a tint stays visible
    rgb = np.repeat(np.maximum(grey, 0.25)[:, None], 3, axis=1)

    plain = np.ones(n_rows, dtype=bool)
    if marks is not None:
        rgb[marks.z] *= Z_TINT
        rgb[marks.r] = np.maximum(grey[marks.r], 0.25)[:, None] * R_TINT
        plain &= ~(marks.z | marks.r)
    painted = np.zeros(n_rows, dtype=bool)
    for annotation in annotations:
        rgb[key_rows(annotation)] = ROLE_TINTS[annotation.role]
        painted[key_rows(annotation)] = True
    rgb[plain & ~painted] = grey[plain & ~painted, None]

    if retained is not None:
        kept = np.zeros(n_rows, dtype=bool)
        for region in retained:
            kept[region.offset // ROW_LEN : region.end // ROW_LEN] = True
        rgb[~kept] *= DIMMED

    lines = -(-n_rows // ROWS_PER_LINE)
    image = np.zeros((lines * ROWS_PER_LINE, 3))
    image[:n_rows] = rgb
    return (image.reshape(lines, ROWS_PER_LINE, 3) * 255).round().astype(np.uint8)


def role_glyphs(heap: HeapSnapshot, annotations: Iterable[KeyAnnotation] = ()) -> np.ndarray:
    """Terminal glyph per row, laid out like heap_map: the role letter on key rows."""
    n_rows = heap.size // ROW_LEN
    lines = -(-n_rows // ROWS_PER_LINE)
    glyphs = np.full(lines * ROWS_PER_LINE, BLOCK, dtype="<U1")
    for annotation in annotations:
        glyphs[key_rows(annotation)] = str(annotation.role)
    return glyphs.reshape(lines, ROWS_PER_LINE)


def render_png(pixels: np.ndarray, path: str | Path, scale: int = 4) -> Path:
    path = Path(path)
    image = Image.fromarray(pixels)
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.Resampling.NEAREST)
    image.save(path, format="PNG")
    return path


class HeapPrinter:
    ESC = "\x1B"
    CSI = f"{ESC}["

    @classmethod
    def paint(cls, glyph: str, fg: Sequence[int], bg: Sequence[int] | None = None) -> str:
        codes = "38;2;{};{};{}".format(*fg)
        if bg is not None:
            codes += ";48;2;{};{};{}".format(*bg)
        return f"{cls.CSI}{codes}m{glyph}{cls.CSI}0m"

    def __init__(self, rows_per_line: int = ROWS_PER_LINE):
        self.rows_per_line = rows_per_line

    @staticmethod
    def enumerate_lines(pixels: np.ndarray) -> RowStream:
        for i, line in zip(count(), pixels):
            yield i, line

    def cell(self, glyph: str, rgb: np.ndarray) -> str:
        colour = [int(c) for c in rgb]
        if glyph == BLOCK:
            return self.paint(glyph, colour)
        # role letters in black over the role colour
        return self.paint(glyph, (0, 0, 0), colour)

    def lines(self, pixels: np.ndarray, glyphs: np.ndarray | None = None) -> list[str]:
        bytes_per_line = self.rows_per_line * ROW_LEN
        if glyphs is None:
            glyphs = np.full(pixels.shape[:2], BLOCK)
        out = []
        for i, line in self.enumerate_lines(pixels):
            offset = i * bytes_per_line
            marker = "|" if offset % PAGE_LEN == 0 else " "
            cells = "".join(self.cell(g, rgb) for g, rgb in zip(glyphs[i], line))
            out.append(f"{offset:#08x}{marker}{cells}")
        return out

    def print(self, pixels: np.ndarray, glyphs: np.ndarray | None = None):
        for line in self.lines(pixels, glyphs):
            print(line)
