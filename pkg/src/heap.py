from __future__ import annotations
from enum import StrEnum
from pathlib import Path
from typing import NamedTuple, Self

import numpy as np

from src.errors import AddressOutOfRange, DataError

ROW_LEN = 8
PAGE_LEN = 4096


class Scenario(StrEnum):
    BASIC_CONNECT = "basic-connect"
    PORT_FORWARD = "port-forward"
    SCP = "scp"
    SHARED_CONNECTION = "shared-connection"


class KeyRole(StrEnum):
    A = "A"  # IV client to server
    B = "B"  # IV server to client
    C = "C"  # encryption key client to server
    D = "D"  # encryption key server to client
    E = "E"  # integrity key client to server
    F = "F"  # integrity key server to client

    @property
    def client_to_server(self) -> bool:
        return self in (KeyRole.A, KeyRole.C, KeyRole.E)


class RegionOrigin(StrEnum):
    PAGE_FILTER = "page-filter"
    ENTROPY_MASK = "entropy-mask"
    CLASSIFIER = "classifier"
    FULL_HEAP = "full-heap"


class HeapSnapshot(NamedTuple):
    data: bytes
    base_addr: int
    original_length: int
    ssh_version: str = ""
    scenario: Scenario = Scenario.BASIC_CONNECT
    source_path: str = ""

    @classmethod
    def from_bytes(
        cls,
        raw: bytes,
        base_addr: int = 0,
        ssh_version: str = "",
        scenario: Scenario | str = Scenario.BASIC_CONNECT,
        source_path: str | Path = "",
    ) -> Self:
        if not raw:
            raise DataError(f"Empty heap: {str(source_path) or '<memory>'}")
        padding = -len(raw) % ROW_LEN
        return cls(
            data=bytes(raw) + b"\x00" * padding,
            base_addr=base_addr,
            original_length=len(raw),
            ssh_version=ssh_version,
            scenario=Scenario(scenario),
            source_path=str(source_path),
        )

    @property
    def size(self) -> int:
        return len(self.data)

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8)

    def read(self, offset: int, length: int) -> bytes:
        return self.data[offset : offset + length]

    @property
    def n_rows(self) -> int:
        return len(self.data) // ROW_LEN


class KeyAnnotation(NamedTuple):
    role: KeyRole
    offset: int
    length: int
    value: bytes
    cipher_name: str

    @property
    def end(self) -> int:
        return self.offset + self.length

    def overlaps(self, offset: int, length: int) -> bool:
        return self.offset < offset + length and offset < self.end


class SliceSample(NamedTuple):
    offset: int
    data: bytes
    label: int | None = None

    @property
    def end(self) -> int:
        return self.offset + len(self.data)


class CandidateRegion(NamedTuple):
    offset: int
    length: int
    origin: RegionOrigin

    @property
    def end(self) -> int:
        return self.offset + self.length


def annotation_offset(addr: int, base: int, heap_len: int | None = None) -> int:
    offset = addr - base
    if offset < 0:
        raise AddressOutOfRange(f"Address {addr:#x} lies below heap base {base:#x}")
    if heap_len is not None and offset >= heap_len:
        raise AddressOutOfRange(
            f"Address {addr:#x} lies past heap end {base + heap_len:#x}"
        )
    return offset


def merge_regions(spans: list[tuple[int, int]], origin: RegionOrigin) -> list[CandidateRegion]:
    """Sorted, non-overlapping regions from (offset, length) spans; touching spans merge."""
    regions: list[CandidateRegion] = []
    for offset, length in sorted(spans):
        if length <= 0:
            continue
        if regions and offset <= regions[-1].end:
            last = regions[-1]
            end = max(last.end, offset + length)
            regions[-1] = CandidateRegion(last.offset, end - last.offset, origin)
        else:
            regions.append(CandidateRegion(offset, length, origin))
    return regions


def total_bytes(regions: list[CandidateRegion]) -> int:
    return sum(region.length for region in regions)
