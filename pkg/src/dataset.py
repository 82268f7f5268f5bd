from __future__ import annotations
import json
import logging
from pathlib import Path
from typing import Iterator, NamedTuple

from src.ciphers import lookup_cipher
from src.errors import (
    AnnotationMismatch,
    DataError,
    EmptySelection,
    MalformedLog,
    MissingHeap,
)
from src.heap import (
    PAGE_LEN,
    ROW_LEN,
    HeapSnapshot,
    KeyAnnotation,
    KeyRole,
    Scenario,
    annotation_offset,
)

log = logging.getLogger(__name__)

HEAP_BASE_FIELDS = ("HEAP_START", "HEAP_ADDR")
HEAP_SUFFIX = "-heap.raw"
SPLITS = ("training", "validation")

SCENARIO_DIRS = {
    "basic-connect": Scenario.BASIC_CONNECT,
    "openssh": Scenario.BASIC_CONNECT,
    "client": Scenario.BASIC_CONNECT,
    "port-forward": Scenario.PORT_FORWARD,
    "port-forwarding": Scenario.PORT_FORWARD,
    "scp": Scenario.SCP,
    "secure-copy": Scenario.SCP,
    "shared-connection": Scenario.SHARED_CONNECTION,
    "ssh-shared-connection": Scenario.SHARED_CONNECTION,
}


class DatasetEntry(NamedTuple):
    heap: HeapSnapshot
    annotations: list[KeyAnnotation]
    json_path: str
    heap_path: str
    log: dict

    @property
    def stem(self) -> str:
        return Path(self.json_path).stem

    @property
    def cipher_name(self) -> str:
        return cipher_name_for(self.log, KeyRole.C)

    @property
    def mac_name(self) -> str | None:
        return self.log.get("MAC_1_NAME")

    def annotation(self, role: KeyRole) -> KeyAnnotation | None:
        for annotation in self.annotations:
            if annotation.role is role:
                return annotation
        return None

    def sibling(self, suffix: str) -> Path:
        return Path(self.json_path).with_name(f"{self.stem}{suffix}")


def parse_hex_bytes(value: str) -> bytes:
    value = value.strip()
    if value[:2].lower() == "0x":
        value = value[2:]
    return bytes.fromhex(value)


def parse_hex_int(value: str | int) -> int:
    if isinstance(value, int):
        return value
    return int(value.strip(), 16)


def cipher_name_for(record: dict, role: KeyRole) -> str:
    # direction 1 is client to server, 2 is server to client
    first = record.get("ENCRYPTION_KEY_1_NAME")
    if role.client_to_server:
        name = first
    else:
        name = record.get("ENCRYPTION_KEY_2_NAME", first)
    if not name:
        raise MalformedLog("Log has no ENCRYPTION_KEY_1_NAME field")
    return name


def heap_path_for(json_path: Path) -> Path:
    candidate = json_path.with_name(f"{json_path.stem}{HEAP_SUFFIX}")
    if candidate.exists():
        return candidate
    others = sorted(json_path.parent.glob(f"{json_path.stem}-heap*"))
    if others:
        return others[0]
    raise MissingHeap(f"No raw heap next to {json_path}")


def _read_log(json_path: Path) -> dict:
    try:
        record = json.loads(json_path.read_text())
    except json.JSONDecodeError as err:
        raise MalformedLog(f"{json_path}: {err}") from err
    if not isinstance(record, dict):
        raise MalformedLog(f"{json_path}: expected a JSON object")
    return record


def _logged_keys(record: dict, json_path: Path) -> list[tuple[KeyRole, int, bytes]]:
    keys = []
    for role in KeyRole:
        prefix = f"KEY_{role}"
        if f"{prefix}_LEN" not in record:
            continue
        try:
            length = int(record[f"{prefix}_LEN"])
            if length == 0:
                continue
            addr = parse_hex_int(record[f"{prefix}_ADDR"])
            value = parse_hex_bytes(record[prefix])
        except (KeyError, ValueError, TypeError) as err:
            raise MalformedLog(f"{json_path}: bad or missing {prefix} fields ({err})") from err
        if len(value) != length:
            raise MalformedLog(
                f"{json_path}: {prefix}_LEN is {length} but {prefix} holds {len(value)} bytes"
            )
        keys.append((role, addr, value))
    if not keys:
        raise MalformedLog(f"{json_path}: no KEY_A .. KEY_F entries with a length")
    return keys


def heap_base(record: dict, keys: list[tuple[KeyRole, int, bytes]], base_fields=HEAP_BASE_FIELDS) -> int:
    for field in base_fields:
        if record.get(field):
            return parse_hex_int(record[field])
    # no base recorded: the lowest key address rounded down to its page
    lowest = min(addr for _, addr, _ in keys)
    return lowest - lowest % PAGE_LEN


def _location(json_path: Path) -> tuple[Scenario, str]:
    # <split>/<scenario>/<version>/<key length>/<stem>.json
    parts = json_path.parts
    if len(parts) < 4:
        return Scenario.BASIC_CONNECT, ""
    scenario = SCENARIO_DIRS.get(parts[-4].lower(), Scenario.BASIC_CONNECT)
    return scenario, parts[-3]


def load_entry(json_path: str | Path, base_fields=HEAP_BASE_FIELDS) -> DatasetEntry:
    json_path = Path(json_path)
    record = _read_log(json_path)
    keys = _logged_keys(record, json_path)
    heap_path = heap_path_for(json_path)
    scenario, version = _location(json_path)

    base = heap_base(record, keys, base_fields)
    heap = HeapSnapshot.from_bytes(
        heap_path.read_bytes(),
        base_addr=base,
        ssh_version=version,
        scenario=scenario,
        source_path=heap_path,
    )

    annotations = []
    for role, addr, value in keys:
        offset = annotation_offset(addr, base, heap.original_length)
        if heap.read(offset, len(value)) != value:
            raise AnnotationMismatch(
                f"{json_path}: KEY_{role} bytes at heap offset {offset:#x} differ from the logged value"
            )
        if offset % ROW_LEN:
            log.debug("%s: KEY_%s at %#x is not 8-byte aligned", json_path, role, offset)
        annotations.append(
            KeyAnnotation(role, offset, len(value), value, cipher_name_for(record, role))
        )

    return DatasetEntry(heap, annotations, str(json_path), str(heap_path), record)


def select_logs(
    root: str | Path,
    split: str,
    scenario: str | None = None,
    version: str | None = None,
    key_len: int | str | None = None,
) -> list[Path]:
    split_dir = Path(root) / split
    if not split_dir.is_dir():
        return []
    wanted = (scenario, version, None if key_len is None else str(key_len))
    selected = []
    for json_path in split_dir.glob("*/*/*/*.json"):
        levels = json_path.relative_to(split_dir).parts[:3]
        if all(want is None or want == level for want, level in zip(wanted, levels)):
            selected.append(json_path)
    return sorted(selected)


def walk_dataset(
    root: str | Path,
    split: str,
    scenario: str | None = None,
    version: str | None = None,
    key_len: int | str | None = None,
) -> Iterator[DatasetEntry]:
    logs = select_logs(root, split, scenario, version, key_len)
    if not logs:
        raise EmptySelection(
            f"No entries under {root}/{split} for scenario={scenario} version={version} key_len={key_len}"
        )
    for json_path in logs:
        try:
            yield load_entry(json_path)
        except (DataError, OSError) as err:
            log.warning("skipping %s: %s", json_path, err)


def entry_directory(root: str | Path, split: str, scenario: str, version: str, key_len: int) -> Path:
    return Path(root) / split / scenario / version / str(key_len)


def write_entry(directory: str | Path, stem: str, raw_heap: bytes, record: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}{HEAP_SUFFIX}").write_bytes(raw_heap)
    json_path = directory / f"{stem}.json"
    json_path.write_text(json.dumps(record, indent=4) + "\n")
    return json_path


def cipher_key_len(entry: DatasetEntry) -> int:
    return lookup_cipher(entry.cipher_name).key_len
