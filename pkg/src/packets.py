from __future__ import annotations
import logging
import struct
from enum import StrEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np
from cryptography.hazmat.primitives import hashes, hmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from src.ciphers import CipherMode, CipherSpec, lookup_cipher
from src.errors import (
    FileTooShort,
    InvalidPacket,
    ProbeLengthError,
    UnsupportedCipher,
)

log = logging.getLogger(__name__)

# RFC 4253 6.1: implementations must handle packets up to 35000 bytes
MAX_PACKET_LENGTH = 35000
MIN_PADDING = 4
MAX_PADDING = 255
HEAD_LEN = 5

SSH_MSG_KEXINIT = 20
SSH_MSG_NEWKEYS = 21
SSH_MSG_SERVICE_REQUEST = 5
SSH_MSG_SERVICE_ACCEPT = 6
SSH_MSG_KEX_ECDH_INIT = 30
SSH_MSG_KEX_ECDH_REPLY = 31

MAC_HASHES = {
    "hmac-sha1": hashes.SHA1,
    "hmac-sha2-256": hashes.SHA256,
    "hmac-sha2-512": hashes.SHA512,
}


class Direction(StrEnum):
    CLIENT_TO_SERVER = "client-to-server"
    SERVER_TO_CLIENT = "server-to-client"

    @classmethod
    def parse(cls, value: str) -> Direction:
        aliases = {"c2s": cls.CLIENT_TO_SERVER, "s2c": cls.SERVER_TO_CLIENT}
        return aliases.get(value, None) or cls(value)

    @property
    def short(self) -> str:
        return "c2s" if self is Direction.CLIENT_TO_SERVER else "s2c"


class ValidationPacket(NamedTuple):
    ciphertext: bytes
    cipher_name: str
    direction: Direction = Direction.CLIENT_TO_SERVER
    sequence_number: int = 0
    # False when only a block-aligned prefix of the stream is known
    boundary_known: bool = True

    @property
    def spec(self) -> CipherSpec:
        return lookup_cipher(self.cipher_name)


class ProbeResult(NamedTuple):
    valid: bool
    decrypted_length: int
    padding_length: int


def _require_validatable(spec: CipherSpec):
    if not spec.validatable:
        raise UnsupportedCipher(f"Cannot validate keys for {spec.name} by decryption")


def check_packet(packet: ValidationPacket, spec: CipherSpec):
    size = len(packet.ciphertext)
    if size < 16 or size % spec.block_len:
        raise InvalidPacket(
            f"Ciphertext of {size} bytes is not a whole number of {spec.block_len} byte blocks (minimum 16)"
        )


def accepted(
    packet_length: np.ndarray,
    padding_length: np.ndarray,
    total_len: int,
    block_len: int,
    boundary_known: bool,
) -> np.ndarray:
    """Binary packet well-formedness of decrypted heads, element-wise."""
    ok = (
        (padding_length >= MIN_PADDING)
        & (padding_length <= MAX_PADDING)
        & (padding_length < packet_length)
        & (packet_length <= MAX_PACKET_LENGTH)
    )
    if boundary_known:
        return ok & (packet_length + 4 == total_len)
    return ok & ((packet_length + 4) % block_len == 0) & (packet_length + 4 >= 16)


def _ecb(key: bytes) -> Cipher:
    return Cipher(algorithms.AES(key), modes.ECB())


class ProbeBatch:
    """
    Decrypts the first block of one packet under many candidate IVs for a
    single key. Only the first cipher block of the packet is ever read.
    """

    def __init__(self, packet: ValidationPacket) -> None:
        self.packet = packet
        self.spec = packet.spec
        _require_validatable(self.spec)
        check_packet(packet, self.spec)
        self.first_block = packet.ciphertext[: self.spec.block_len]
        self.head = np.frombuffer(self.first_block[:HEAD_LEN], dtype=np.uint8)

    def heads(self, key: bytes, ivs: np.ndarray) -> np.ndarray:
        """First five plaintext bytes for every IV row in ivs (shape n x iv_len)."""
        if self.spec.mode is CipherMode.CTR:
            keystream = _ecb(key).encryptor().update(ivs.tobytes())
            blocks = np.frombuffer(keystream, dtype=np.uint8).reshape(len(ivs), -1)
            return blocks[:, :HEAD_LEN] ^ self.head
        decrypted = _ecb(key).decryptor().update(self.first_block)
        return ivs[:, :HEAD_LEN] ^ np.frombuffer(decrypted[:HEAD_LEN], dtype=np.uint8)

    def valid_ivs(self, key: bytes, ivs: np.ndarray) -> np.ndarray:
        heads = self.heads(key, ivs).astype(np.int64)
        packet_length = (heads[:, 0] << 24) | (heads[:, 1] << 16) | (heads[:, 2] << 8) | heads[:, 3]
        return accepted(
            packet_length,
            heads[:, 4],
            len(self.packet.ciphertext),
            self.spec.block_len,
            self.packet.boundary_known,
        )


def validate_probe(packet: ValidationPacket, iv: bytes, key: bytes) -> ProbeResult:
    spec = packet.spec
    _require_validatable(spec)
    if len(iv) != spec.iv_len or len(key) != spec.key_len:
        raise ProbeLengthError(
            f"{spec.name} needs a {spec.iv_len} byte IV and {spec.key_len} byte key. "
            f"Got {len(iv)} and {len(key)}"
        )
    batch = ProbeBatch(packet)
    head = batch.heads(key, np.frombuffer(iv, dtype=np.uint8).reshape(1, -1))[0]
    packet_length, padding_length = struct.unpack(">IB", head.tobytes())
    valid = accepted(
        np.array([packet_length]),
        np.array([padding_length]),
        len(packet.ciphertext),
        spec.block_len,
        packet.boundary_known,
    )[0]
    return ProbeResult(bool(valid), packet_length, padding_length)


def load_raw_ciphertext(
    path: str | Path, cipher_name: str, direction: Direction = Direction.CLIENT_TO_SERVER
) -> ValidationPacket:
    spec = lookup_cipher(cipher_name)
    data = Path(path).read_bytes()
    if len(data) < max(spec.block_len, 16):
        raise FileTooShort(f"{path}: {len(data)} bytes is shorter than one {spec.name} block")
    return ValidationPacket(data, spec.name, direction, sequence_number=0)


def frame_payload(payload: bytes, block_len: int, padding: bytes) -> bytes:
    """
    Wraps a payload in the binary packet framing:
    uint32 packet_length, byte padding_length, payload, random padding.
    `padding` must supply at least padding_for(...) bytes.
    """
    n_padding = padding_for(len(payload), block_len)
    packet_length = 1 + len(payload) + n_padding
    return struct.pack(">IB", packet_length, n_padding) + payload + padding[:n_padding]


def padding_for(payload_len: int, block_len: int) -> int:
    block_len = max(block_len, 8)
    n_padding = block_len - (HEAD_LEN + payload_len) % block_len
    if n_padding < MIN_PADDING:
        n_padding += block_len
    return n_padding


def encrypt_packet(plain: bytes, spec: CipherSpec, iv: bytes, key: bytes) -> bytes:
    _require_validatable(spec)
    mode = modes.CTR(iv) if spec.mode is CipherMode.CTR else modes.CBC(iv)
    encryptor = Cipher(algorithms.AES(key), mode).encryptor()
    return encryptor.update(plain) + encryptor.finalize()


def packet_mac(mac_name: str | None, mac_key: bytes, sequence_number: int, plain: bytes) -> bytes:
    if not mac_name:
        return b""
    algorithm = MAC_HASHES[mac_name]()
    tag = hmac.HMAC(mac_key, algorithm)
    tag.update(struct.pack(">I", sequence_number) + plain)
    return tag.finalize()
