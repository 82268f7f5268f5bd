import json

import pytest

from src.dataset import (
    heap_base,
    load_entry,
    select_logs,
    walk_dataset,
    write_entry,
)
from src.errors import AnnotationMismatch, EmptySelection, MalformedLog, MissingHeap
from src.heap import KeyRole, Scenario

IV_A = bytes.fromhex("564084fff3c69eed22e9c59b7d46b6d0")
KEY_C = bytes.fromhex("00112233445566778899aabbccddeeff0011223344556677")
BASE = 0x55A5C3744000


def record_fixture(**overrides) -> dict:
    record = {
        "HEAP_START": f"{BASE:x}",
        "ENCRYPTION_KEY_1_NAME": "aes192-ctr",
        "ENCRYPTION_KEY_2_NAME": "aes192-ctr",
        "MAC_1_NAME": "hmac-sha2-256",
        "KEY_A_ADDR": f"{BASE + 0x9A0:x}",
        "KEY_A_LEN": 16,
        "KEY_A": IV_A.hex(),
        "KEY_B_ADDR": "0",
        "KEY_B_LEN": 0,
        "KEY_B": "",
        "KEY_C_ADDR": f"{BASE + 0x200:x}",
        "KEY_C_LEN": 24,
        "KEY_C": KEY_C.hex(),
    }
    record.update(overrides)
    return record


def heap_bytes_fixture() -> bytes:
    raw = bytearray(4096)
    raw[0x9A0 : 0x9A0 + 16] = IV_A
    raw[0x200 : 0x200 + 24] = KEY_C
    return bytes(raw)


def write_fixture(root, split="training", scenario="basic-connect", version="V_8_1_P1", key_len=24, stem="entry", **overrides):
    directory = root / split / scenario / version / str(key_len)
    return write_entry(directory, stem, heap_bytes_fixture(), record_fixture(**overrides))


def test_load_entry(tmp_path):
    # Arrange
    json_path = write_fixture(tmp_path, scenario="scp")

    # Act
    entry = load_entry(json_path)

    # Assert
    a = entry.annotation(KeyRole.A)
    assert (a.offset, a.length, a.value, a.cipher_name) == (0x9A0, 16, IV_A, "aes192-ctr"), f"{a=}"
    assert entry.annotation(KeyRole.B) is None
    assert entry.annotation(KeyRole.C).offset == 0x200
    assert entry.heap.base_addr == BASE
    assert entry.heap.scenario is Scenario.SCP
    assert entry.heap.ssh_version == "V_8_1_P1"
    assert entry.cipher_name == "aes192-ctr"
    assert entry.mac_name == "hmac-sha2-256"


def test_mismatched_key_bytes(tmp_path):
    json_path = write_fixture(tmp_path, KEY_A="ff" * 16)

    with pytest.raises(AnnotationMismatch):
        load_entry(json_path)


def test_missing_heap(tmp_path):
    json_path = write_fixture(tmp_path)
    json_path.with_name("entry-heap.raw").unlink()

    with pytest.raises(MissingHeap):
        load_entry(json_path)


@pytest.mark.parametrize(["overrides"], (
    ({"KEY_A_LEN": 12},),
    ({"KEY_A": "not hex"},),
    ({"KEY_A_LEN": 0, "KEY_C_LEN": 0},),
))
def test_malformed_logs(tmp_path, overrides):
    json_path = write_fixture(tmp_path, **overrides)

    with pytest.raises(MalformedLog):
        load_entry(json_path)


def test_unparseable_json(tmp_path):
    json_path = write_fixture(tmp_path)
    json_path.write_text("{")

    with pytest.raises(MalformedLog):
        load_entry(json_path)


def test_heap_base_without_start_field():
    record = record_fixture()
    del record["HEAP_START"]
    keys = [(KeyRole.A, BASE + 0x9A0, IV_A), (KeyRole.C, BASE + 0x200, KEY_C)]

    assert heap_base(record, keys) == BASE


def test_select_logs(tmp_path):
    # Arrange
    write_fixture(tmp_path, "training", version="V_7_8_P1", key_len=24, stem="a")
    write_fixture(tmp_path, "training", version="V_8_1_P1", key_len=24, stem="b")
    write_fixture(tmp_path, "validation", version="V_7_8_P1", key_len=24, stem="c")
    write_fixture(tmp_path, "validation", version="V_7_8_P1", key_len=16, stem="d")
    write_fixture(tmp_path, "validation", version="V_8_0_P1", key_len=24, stem="e")

    # Act
    filtered = select_logs(tmp_path, "validation", version="V_7_8_P1", key_len=24)
    everything = select_logs(tmp_path, "training")

    # Assert
    assert [p.stem for p in filtered] == ["c"]
    assert [p.stem for p in everything] == ["a", "b"]


def test_walk_skips_broken_entries(tmp_path, caplog):
    write_fixture(tmp_path, stem="good")
    write_fixture(tmp_path, stem="bad", KEY_A="ff" * 16)

    entries = list(walk_dataset(tmp_path, "training"))

    assert [e.stem for e in entries] == ["good"]
    assert "bad.json" in caplog.text


@pytest.mark.parametrize(["split", "n_expected"], (
    ("training", 6),
    ("validation", 3),
))
def test_walk_yields_one_entry_per_heap_file(tmp_path, split, n_expected):
    # Arrange
    for version in ("V_7_8_P1", "V_8_1_P1", "V_8_0_P1"):
        for stem in ("a", "b"):
            json_path = write_fixture(tmp_path, "training", version=version, stem=stem)
            json_path.with_name(f"{stem}-c2s.bin").write_bytes(bytes(32))
            json_path.with_name(f"{stem}.pcap").write_bytes(b"")
        write_fixture(tmp_path, "validation", version=version, key_len=16, stem="c")
    (tmp_path / split / "notes.txt").write_text("not an entry")

    # Act
    entries = list(walk_dataset(tmp_path, split))

    # Assert
    heaps = sorted((tmp_path / split).rglob("*-heap.raw"))
    assert len(entries) == len(heaps) == n_expected
    assert sorted(e.heap_path for e in entries) == sorted(str(h) for h in heaps)


def test_walk_empty_selection(tmp_path):
    with pytest.raises(EmptySelection):
        list(walk_dataset(tmp_path / "missing", "training"))


def test_write_entry_layout(tmp_path):
    json_path = write_fixture(tmp_path)

    assert json_path.name == "entry.json"
    assert json_path.with_name("entry-heap.raw").read_bytes() == heap_bytes_fixture()
    assert json.loads(json_path.read_text())["KEY_C_LEN"] == 24
