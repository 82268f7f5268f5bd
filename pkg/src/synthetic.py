"""
Synthetic OpenSSH heaps with known session keys.

A generated heap is a run of glibc style chunks (8 byte size header, 16 byte
alignment) filled with one of a few filler kinds, with the session keys
written into their own chunks at the recipe offsets. Under the mixed profile
a fraction of the pages is dense (random blobs and pointer arrays) and the
rest is sparse (zero runs, strings, small structs); pages holding a key are
always dense.

The generator also frames the first encrypted packet of each direction under
the embedded keys and can lay the whole handshake out as a pcap.
"""
from __future__ import annotations
import logging
import struct
from enum import StrEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from src.ciphers import CipherSpec, lookup_cipher, mac_length
from src.dataset import DatasetEntry, write_entry
from src.errors import InvalidRecipe, OverlappingRegions
from src.heap import (
    PAGE_LEN,
    ROW_LEN,
    HeapSnapshot,
    KeyAnnotation,
    KeyRole,
    Scenario,
)
from src.packets import (
    MAC_HASHES,
    SSH_MSG_KEX_ECDH_INIT,
    SSH_MSG_KEX_ECDH_REPLY,
    SSH_MSG_KEXINIT,
    SSH_MSG_NEWKEYS,
    SSH_MSG_SERVICE_ACCEPT,
    SSH_MSG_SERVICE_REQUEST,
    Direction,
    ValidationPacket,
    encrypt_packet,
    frame_payload,
    packet_mac,
)
from src.pcap import write_session_pcap

log = logging.getLogger(__name__)

MIN_HEAP_SIZE = 4096
DEFAULT_HEAP_SIZE = 132 * 1024
DEFAULT_DENSE_FRACTION = 0.28
DEFAULT_MAC = "hmac-sha2-256"
DEFAULT_VERSION = "V_8_1_P1"

CHUNK_ALIGN = 16
MIN_CHUNK = 32
# one header row on either side of a key keeps recipes from gluing keys together
KEY_GAP = 16
# packets sent in each direction before NEWKEYS: KEXINIT, ECDH init/reply, NEWKEYS
PACKETS_BEFORE_ENCRYPTION = 3

CLIENT_BANNER = b"SSH-2.0-OpenSSH_8.1\r\n"
SERVER_BANNER = b"SSH-2.0-OpenSSH_8.1p1 Debian-1\r\n"

VOCABULARY = (
    b"aes128-ctr", b"aes192-ctr", b"aes256-ctr", b"aes256-gcm@openssh.com",
    b"chacha20-poly1305@openssh.com", b"hmac-sha2-256", b"hmac-sha2-512",
    b"umac-64-etm@openssh.com", b"curve25519-sha256", b"ecdh-sha2-nistp256",
    b"ssh-ed25519", b"rsa-sha2-512", b"none", b"zlib@openssh.com",
    b"/usr/bin/ssh", b"/etc/ssh/ssh_config", b"/home/user/.ssh/known_hosts",
    b"/home/user/.ssh/id_ed25519", b"localhost", b"session", b"shell", b"exec",
    b"pty-req", b"xterm-256color", b"keepalive@openssh.com", b"SSH_AUTH_SOCK",
    b"LANG=C.UTF-8", b"publickey,password", b"OpenSSH_8.1", b"ssh-connection",
)


class FillerProfile(StrEnum):
    ZEROS = "zeros"
    ASCII_STRINGS = "ascii-strings"
    POINTER_LIKE = "pointer-like"
    MIXED = "mixed"


class Placement(StrEnum):
    RANDOM = "random"
    TAIL = "tail"
    EDGES = "edges"


class SyntheticRecipe(NamedTuple):
    heap_size: int
    cipher: CipherSpec
    key_offsets: dict[KeyRole, int]
    filler_profile: FillerProfile = FillerProfile.MIXED
    rng_seed: int = 0
    mac_name: str | None = DEFAULT_MAC
    dense_fraction: float = DEFAULT_DENSE_FRACTION
    ssh_version: str = DEFAULT_VERSION
    scenario: Scenario = Scenario.BASIC_CONNECT

    def key_length(self, role: KeyRole) -> int:
        if role in (KeyRole.A, KeyRole.B):
            return self.cipher.iv_len
        if role in (KeyRole.C, KeyRole.D):
            return self.cipher.key_len
        if self.cipher.is_aead:
            return 0
        return mac_length(self.mac_name)

    def key_spans(self) -> list[tuple[KeyRole, int, int]]:
        spans = [(role, offset, self.key_length(role)) for role, offset in self.key_offsets.items()]
        return sorted(spans, key=lambda span: span[1])

    def validate(self):
        if self.heap_size < MIN_HEAP_SIZE or self.heap_size % ROW_LEN:
            raise InvalidRecipe(
                f"Heap size must be a multiple of 8 and at least {MIN_HEAP_SIZE}. Got {self.heap_size}"
            )
        if not 0.0 <= self.dense_fraction <= 1.0:
            raise InvalidRecipe(f"Dense fraction must lie in [0, 1]. Got {self.dense_fraction}")
        if self.mac_name and self.mac_name not in MAC_HASHES:
            raise InvalidRecipe(f"Generator cannot produce MAC {self.mac_name!r}")
        if not self.key_offsets:
            raise InvalidRecipe("Recipe places no keys")
        for role, offset, length in self.key_spans():
            if length == 0:
                raise InvalidRecipe(f"{self.cipher.name} with MAC {self.mac_name!r} has no Key {role}")
            if offset % ROW_LEN:
                raise InvalidRecipe(f"Key {role} offset {offset} is not 8-byte aligned")
            if offset < 0 or offset + length > self.heap_size:
                raise InvalidRecipe(
                    f"Key {role} at {offset} (+{length}) does not fit a {self.heap_size} byte heap"
                )
        spans = self.key_spans()
        for (role, offset, length), (other, next_offset, _) in zip(spans, spans[1:]):
            if offset + length > next_offset:
                raise OverlappingRegions(f"Key {role} at {offset} (+{length}) overlaps Key {other} at {next_offset}")


class SyntheticBundle(NamedTuple):
    recipe: SyntheticRecipe
    entry: DatasetEntry
    raw_heap: bytes
    record: dict
    packets: dict[Direction, ValidationPacket]
    macs: dict[Direction, bytes]
    exchanges: list[tuple[Direction, bytes]]
    isns: tuple[int, int]


def default_roles(cipher: CipherSpec, mac_name: str | None) -> list[KeyRole]:
    roles = [KeyRole.C, KeyRole.D]
    if cipher.iv_len:
        roles = [KeyRole.A, KeyRole.B] + roles
    if mac_name and not cipher.is_aead:
        roles += [KeyRole.E, KeyRole.F]
    return sorted(roles)


def random_recipe(
    seed: int,
    cipher_name: str = "aes128-ctr",
    heap_size: int = DEFAULT_HEAP_SIZE,
    filler_profile: FillerProfile = FillerProfile.MIXED,
    placement: Placement = Placement.RANDOM,
    mac_name: str | None = DEFAULT_MAC,
    roles: list[KeyRole] | None = None,
    ssh_version: str = DEFAULT_VERSION,
    scenario: Scenario = Scenario.BASIC_CONNECT,
) -> SyntheticRecipe:
    """
    A recipe with every key of the cipher at a random aligned offset.
    `tail` keeps Key A and Key C in the final quarter of the heap; `edges`
    puts Key A at offset 0 and ends Key C on the last heap row.
    """
    cipher = lookup_cipher(cipher_name)
    recipe = SyntheticRecipe(
        heap_size, cipher, {}, FillerProfile(filler_profile), seed, mac_name,
        ssh_version=ssh_version, scenario=Scenario(scenario),
    )
    rng = np.random.default_rng([seed, 1])
    roles = roles or default_roles(cipher, mac_name)
    taken: list[tuple[int, int]] = []

    def free(offset: int, length: int) -> bool:
        return all(offset + length + KEY_GAP <= start or end + KEY_GAP <= offset for start, end in taken)

    def place(role: KeyRole, low: int, high: int) -> int:
        length = recipe.key_length(role)
        high = min(high, heap_size - length)
        for _ in range(10_000):
            offset = int(rng.integers(low // ROW_LEN, high // ROW_LEN + 1)) * ROW_LEN
            if free(offset, length):
                return offset
        raise InvalidRecipe(f"No room for Key {role} between {low} and {high}")

    fixed: dict[KeyRole, int] = {}
    placement = Placement(placement)
    if placement is Placement.EDGES:
        if KeyRole.A in roles:
            fixed[KeyRole.A] = 0
        if KeyRole.C in roles:
            fixed[KeyRole.C] = heap_size - cipher.key_len - (heap_size - cipher.key_len) % ROW_LEN
    for role, offset in fixed.items():
        taken.append((offset, offset + recipe.key_length(role)))

    offsets = dict(fixed)
    for role in roles:
        if role in offsets:
            continue
        low = 0
        if placement is Placement.TAIL and role in (KeyRole.A, KeyRole.C):
            low = heap_size * 3 // 4
        offset = place(role, low, heap_size)
        taken.append((offset, offset + recipe.key_length(role)))
        offsets[role] = offset

    return recipe._replace(key_offsets={role: offsets[role] for role in sorted(offsets)})


def chunk_size(length: int) -> int:
    # glibc: request + 8 byte header, rounded up to 16, at least 32
    size = length + ROW_LEN
    return max(size + -size % CHUNK_ALIGN, MIN_CHUNK)


class HeapPainter:
    """Lays chunks over a zeroed buffer."""

    def __init__(self, recipe: SyntheticRecipe, rng: np.random.Generator, base_addr: int) -> None:
        self.recipe = recipe
        self.rng = rng
        self.base_addr = base_addr
        self.buf = bytearray(recipe.heap_size)
        self.dense_pages = self.choose_dense_pages()

    def choose_dense_pages(self) -> set[int]:
        n_pages = -(-self.recipe.heap_size // PAGE_LEN)
        key_pages = set()
        for _, offset, length in self.recipe.key_spans():
            key_pages.update(range(offset // PAGE_LEN, (offset + length - 1) // PAGE_LEN + 1))
        others = sorted(set(range(n_pages)) - key_pages)
        wanted = max(round(self.recipe.dense_fraction * n_pages) - len(key_pages), 0)
        extra = self.rng.choice(others, size=min(wanted, len(others)), replace=False) if others else []
        return key_pages | {int(page) for page in extra}

    def pointers(self, n: int) -> bytes:
        count = n // ROW_LEN
        targets = self.rng.integers(0, self.recipe.heap_size // CHUNK_ALIGN, count) * CHUNK_ALIGN
        values = (self.base_addr + targets).astype("<u8")
        values[self.rng.random(count) < 0.2] = 0
        return values.tobytes()

    def strings(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += VOCABULARY[self.rng.integers(len(VOCABULARY))] + b"\x00"
        return bytes(out[:n])

    def small_struct(self, n: int) -> bytes:
        fields = self.rng.integers(0, 512, n // 4).astype("<u4").tobytes()
        if n >= 2 * ROW_LEN:
            fields = fields[:ROW_LEN] + self.pointers(ROW_LEN) + fields[2 * ROW_LEN :]
        return fields

    def draw(self, offset: int) -> tuple[str, int]:
        profile = self.recipe.filler_profile
        choice = self.rng.choice
        if profile is FillerProfile.ASCII_STRINGS:
            return "strings", int(choice([32, 48, 64, 96, 128, 256]))
        if profile is FillerProfile.POINTER_LIKE:
            return "pointers", int(choice([32, 48, 64, 96, 128]))
        if offset // PAGE_LEN in self.dense_pages:
            if self.rng.random() < 0.75:
                return "random", int(choice([144, 208, 272, 528, 1040]))
            return "pointers", int(choice([32, 48, 64, 96]))
        kind = str(choice(["zeros", "strings", "struct", "pointers"], p=[0.35, 0.35, 0.2, 0.1]))
        sizes = {
            "zeros": [64, 128, 256, 512, 1024],
            "strings": [32, 48, 64, 96, 128],
            "struct": [32, 48, 64],
            "pointers": [32, 48],
        }[kind]
        return kind, int(choice(sizes))

    def body(self, kind: str, n: int) -> bytes:
        if kind == "random":
            return self.rng.bytes(n)
        if kind == "pointers":
            return self.pointers(n)
        if kind == "strings":
            return self.strings(n)
        if kind == "struct":
            return self.small_struct(n)
        return bytes(n)

    def header(self, offset: int, size: int):
        self.buf[offset : offset + ROW_LEN] = struct.pack("<Q", size | 1)

    def fill(self, start: int, end: int):
        if self.recipe.filler_profile is FillerProfile.ZEROS:
            return
        cursor = start
        while end - cursor >= MIN_CHUNK:
            kind, size = self.draw(cursor)
            size = min(size, end - cursor)
            if end - cursor - size < MIN_CHUNK:
                size = end - cursor
            self.header(cursor, size)
            self.buf[cursor + ROW_LEN : cursor + size] = self.body(kind, size - ROW_LEN)
            cursor += size

    def paint(self, keys: dict[KeyRole, bytes]) -> bytes:
        spans = self.recipe.key_spans()
        heap_size = self.recipe.heap_size
        cursor = 0
        for index, (role, offset, length) in enumerate(spans):
            size = chunk_size(length)
            header_at = offset - ROW_LEN
            if header_at >= cursor:
                self.fill(cursor, header_at)
                if self.recipe.filler_profile is not FillerProfile.ZEROS:
                    self.header(header_at, size)
            self.buf[offset : offset + length] = keys[role]
            limit = spans[index + 1][1] - ROW_LEN if index + 1 < len(spans) else heap_size
            cursor = max(min(header_at + size, limit), offset + length)
        self.fill(cursor, heap_size)
        return bytes(self.buf)


def ssh_string(value: bytes) -> bytes:
    return struct.pack(">I", len(value)) + value


def name_list(*names: str) -> bytes:
    return ssh_string(",".join(names).encode())


class SessionKeys(NamedTuple):
    iv: bytes | None
    key: bytes | None
    mac_key: bytes | None


def direction_keys(keys: dict[KeyRole, bytes], direction: Direction) -> SessionKeys:
    if direction is Direction.CLIENT_TO_SERVER:
        return SessionKeys(keys.get(KeyRole.A), keys.get(KeyRole.C), keys.get(KeyRole.E))
    return SessionKeys(keys.get(KeyRole.B), keys.get(KeyRole.D), keys.get(KeyRole.F))


def handshake(recipe: SyntheticRecipe, rng: np.random.Generator, direction: Direction) -> list[bytes]:
    """Cleartext packets one side sends from KEXINIT up to and including NEWKEYS."""
    mac = recipe.mac_name or ""
    kexinit = (
        bytes([SSH_MSG_KEXINIT])
        + rng.bytes(16)
        + name_list("curve25519-sha256", "ecdh-sha2-nistp256")
        + name_list("ssh-ed25519", "rsa-sha2-512")
        + name_list(recipe.cipher.name)
        + name_list(recipe.cipher.name)
        + name_list(mac)
        + name_list(mac)
        + name_list("none")
        + name_list("none")
        + name_list()
        + name_list()
        + b"\x00"
        + bytes(4)
    )
    if direction is Direction.CLIENT_TO_SERVER:
        exchange = bytes([SSH_MSG_KEX_ECDH_INIT]) + ssh_string(rng.bytes(32))
    else:
        host_key = ssh_string(b"ssh-ed25519") + ssh_string(rng.bytes(32))
        signature = ssh_string(b"ssh-ed25519") + ssh_string(rng.bytes(64))
        exchange = (
            bytes([SSH_MSG_KEX_ECDH_REPLY])
            + ssh_string(host_key)
            + ssh_string(rng.bytes(32))
            + ssh_string(signature)
        )
    payloads = [kexinit, exchange, bytes([SSH_MSG_NEWKEYS])]
    return [frame_payload(payload, ROW_LEN, rng.bytes(255)) for payload in payloads]


def first_packet(
    recipe: SyntheticRecipe,
    rng: np.random.Generator,
    direction: Direction,
    session: SessionKeys,
) -> tuple[ValidationPacket, bytes] | None:
    if not recipe.cipher.validatable or session.iv is None or session.key is None:
        return None
    if direction is Direction.CLIENT_TO_SERVER:
        payload = bytes([SSH_MSG_SERVICE_REQUEST]) + ssh_string(b"ssh-userauth")
    else:
        payload = bytes([SSH_MSG_SERVICE_ACCEPT]) + ssh_string(b"ssh-userauth")
    plain = frame_payload(payload, recipe.cipher.block_len, rng.bytes(255))
    ciphertext = encrypt_packet(plain, recipe.cipher, session.iv, session.key)
    tag = b""
    if session.mac_key is not None:
        tag = packet_mac(recipe.mac_name, session.mac_key, PACKETS_BEFORE_ENCRYPTION, plain)
    packet = ValidationPacket(ciphertext, recipe.cipher.name, direction, PACKETS_BEFORE_ENCRYPTION)
    return packet, tag


def key_log(recipe: SyntheticRecipe, base_addr: int, keys: dict[KeyRole, bytes], pid: int) -> dict:
    record = {
        "SSH_PID": pid,
        "HEAP_START": f"{base_addr:x}",
        "HEAP_LEN": recipe.heap_size,
        "ENCRYPTION_KEY_1_NAME": recipe.cipher.name,
        "ENCRYPTION_KEY_2_NAME": recipe.cipher.name,
        "MAC_1_NAME": recipe.mac_name or "",
        "MAC_2_NAME": recipe.mac_name or "",
    }
    for role in KeyRole:
        if role in keys:
            record[f"KEY_{role}_ADDR"] = f"{base_addr + recipe.key_offsets[role]:x}"
            record[f"KEY_{role}_LEN"] = len(keys[role])
            record[f"KEY_{role}"] = keys[role].hex()
        else:
            record[f"KEY_{role}_ADDR"] = "0"
            record[f"KEY_{role}_LEN"] = 0
            record[f"KEY_{role}"] = ""
    return record


def build_synthetic(recipe: SyntheticRecipe) -> SyntheticBundle:
    recipe.validate()
    heap_rng, key_rng, session_rng = (
        np.random.default_rng(seed) for seed in np.random.SeedSequence(recipe.rng_seed).spawn(3)
    )

    base_addr = 0x550000000000 + int(heap_rng.integers(0x100000, 0xFFFFFF)) * PAGE_LEN
    keys = {role: key_rng.bytes(length) for role, _, length in sorted(recipe.key_spans())}
    raw_heap = HeapPainter(recipe, heap_rng, base_addr).paint(keys)

    record = key_log(recipe, base_addr, keys, pid=int(key_rng.integers(1000, 65535)))
    heap = HeapSnapshot.from_bytes(raw_heap, base_addr, recipe.ssh_version, recipe.scenario)
    annotations = [
        KeyAnnotation(role, offset, length, keys[role], recipe.cipher.name)
        for role, offset, length in recipe.key_spans()
    ]
    entry = DatasetEntry(heap, annotations, "", "", record)

    packets: dict[Direction, ValidationPacket] = {}
    macs: dict[Direction, bytes] = {}
    cleartext = {}
    for direction in Direction:
        cleartext[direction] = handshake(recipe, session_rng, direction)
        produced = first_packet(recipe, session_rng, direction, direction_keys(keys, direction))
        if produced is not None:
            packets[direction], macs[direction] = produced

    c2s, s2c = Direction.CLIENT_TO_SERVER, Direction.SERVER_TO_CLIENT
    encrypted = {
        direction: packets[direction].ciphertext + macs[direction] if direction in packets else b""
        for direction in Direction
    }
    exchanges = [
        (c2s, CLIENT_BANNER),
        (s2c, SERVER_BANNER),
        (c2s, cleartext[c2s][0]),
        (s2c, cleartext[s2c][0]),
        (c2s, cleartext[c2s][1]),
        (s2c, cleartext[s2c][1] + cleartext[s2c][2]),
        (c2s, cleartext[c2s][2] + encrypted[c2s]),
    ]
    if encrypted[s2c]:
        exchanges.append((s2c, encrypted[s2c]))
    isns = (int(session_rng.integers(0, 1 << 32)), int(session_rng.integers(0, 1 << 32)))

    log.debug(
        "synthetic heap seed=%d size=%d cipher=%s keys=%s",
        recipe.rng_seed, recipe.heap_size, recipe.cipher.name,
        {str(role): offset for role, offset in recipe.key_offsets.items()},
    )
    return SyntheticBundle(recipe, entry, raw_heap, record, packets, macs, exchanges, isns)


def generate_synthetic(recipe: SyntheticRecipe) -> tuple[DatasetEntry, ValidationPacket | None]:
    bundle = build_synthetic(recipe)
    return bundle.entry, bundle.packets.get(Direction.CLIENT_TO_SERVER)


def write_bundle(bundle: SyntheticBundle, directory: str | Path, stem: str) -> Path:
    """
    Writes <stem>.json, <stem>-heap.raw, the raw ciphertext of each direction
    (<stem>-c2s.bin, <stem>-s2c.bin, MAC excluded) and <stem>.pcap.
    """
    directory = Path(directory)
    json_path = write_entry(directory, stem, bundle.raw_heap, bundle.record)
    for direction, packet in bundle.packets.items():
        (directory / f"{stem}-{direction.short}.bin").write_bytes(packet.ciphertext)
    if bundle.packets:
        write_session_pcap(directory / f"{stem}.pcap", bundle.exchanges, *bundle.isns)
    return json_path
