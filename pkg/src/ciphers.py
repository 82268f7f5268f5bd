from __future__ import annotations
from enum import StrEnum
from typing import NamedTuple

from src.errors import UnknownCipher


class CipherMode(StrEnum):
    CTR = "ctr"
    CBC = "cbc"
    CHACHA20POLY1305 = "chacha20-poly1305"
    GCM = "gcm"


class CipherSpec(NamedTuple):
    name: str
    iv_len: int
    key_len: int
    block_len: int
    mode: CipherMode
    validatable: bool

    @property
    def is_aead(self) -> bool:
        return self.mode in (CipherMode.GCM, CipherMode.CHACHA20POLY1305)


# name, iv length, key length, block length, mode, validatable
_REGISTRY = {
    spec.name: spec
    for spec in (
        CipherSpec("aes128-ctr", 16, 16, 16, CipherMode.CTR, True),
        CipherSpec("aes192-ctr", 16, 24, 16, CipherMode.CTR, True),
        CipherSpec("aes256-ctr", 16, 32, 16, CipherMode.CTR, True),
        CipherSpec("aes128-cbc", 16, 16, 16, CipherMode.CBC, True),
        CipherSpec("aes192-cbc", 16, 24, 16, CipherMode.CBC, True),
        CipherSpec("aes256-cbc", 16, 32, 16, CipherMode.CBC, True),
        # two concatenated 32-byte keys, nonce is the packet sequence number
        CipherSpec("chacha20-poly1305", 0, 64, 8, CipherMode.CHACHA20POLY1305, False),
        CipherSpec("aes128-gcm", 12, 16, 16, CipherMode.GCM, False),
        CipherSpec("aes256-gcm", 12, 32, 16, CipherMode.GCM, False),
    )
}

MAC_LENGTHS = {
    "hmac-sha1": 20,
    "hmac-sha2-256": 32,
    "hmac-sha2-512": 64,
    "umac-64": 8,
    "umac-128": 16,
}

AEAD_TAG_LEN = 16


def _normalise(name: str) -> str:
    name = name.strip().lower()
    for suffix in ("@openssh.com", "-etm"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def lookup_cipher(name: str) -> CipherSpec:
    try:
        return _REGISTRY[_normalise(name)]
    except KeyError:
        raise UnknownCipher(f"Unknown cipher: {name!r}") from None


def registered_ciphers() -> list[CipherSpec]:
    return list(_REGISTRY.values())


def mac_length(mac_name: str | None, spec: CipherSpec | None = None) -> int:
    """
    Length of the MAC trailer that follows every encrypted packet.
    AEAD ciphers carry a 16 byte tag and ignore the negotiated MAC.
    """
    if spec is not None and spec.is_aead:
        return AEAD_TAG_LEN
    if not mac_name:
        return 0
    return MAC_LENGTHS.get(_normalise(mac_name), 0)
