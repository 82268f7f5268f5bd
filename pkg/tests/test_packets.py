import numpy as np
import pytest

from src.ciphers import lookup_cipher
from src.errors import FileTooShort, InvalidPacket, ProbeLengthError, UnsupportedCipher
from src.heap import KeyRole
from src.packets import (
    Direction,
    ProbeBatch,
    ValidationPacket,
    encrypt_packet,
    frame_payload,
    load_raw_ciphertext,
    padding_for,
    validate_probe,
)
from tests.helpers import bundle_fixture


def packet_fixture(cipher_name: str = "aes128-ctr", seed: int = 5):
    bundle = bundle_fixture(seed=seed, cipher_name=cipher_name)
    keys = {a.role: a.value for a in bundle.entry.annotations}
    return bundle.packets[Direction.CLIENT_TO_SERVER], keys[KeyRole.A], keys[KeyRole.C]


@pytest.mark.parametrize(["cipher_name"], (
    ("aes128-ctr",),
    ("aes256-ctr",),
    ("aes192-cbc",),
))
def test_true_pair_validates(cipher_name):
    packet, iv, key = packet_fixture(cipher_name)

    result = validate_probe(packet, iv, key)

    assert result.valid, f"{result=}"
    assert result.decrypted_length == len(packet.ciphertext) - 4
    assert 4 <= result.padding_length < result.decrypted_length


def test_flipped_key_bit_is_rejected():
    packet, iv, key = packet_fixture()
    flipped = bytes([key[0] ^ 1]) + key[1:]

    assert not validate_probe(packet, iv, flipped).valid


def test_wrong_keys_are_rejected():
    # Arrange
    packet, iv, _ = packet_fixture()
    rng = np.random.default_rng(1234)
    keys = [rng.bytes(16) for _ in range(10_000)]
    batch = ProbeBatch(packet)
    ivs = np.frombuffer(iv, dtype=np.uint8).reshape(1, -1)

    # Act
    accepted = sum(bool(batch.valid_ivs(key, ivs)[0]) for key in keys)

    # Assert
    assert accepted <= 10, f"{accepted=}"


def test_batch_agrees_with_single_checks():
    packet, iv, key = packet_fixture()
    rng = np.random.default_rng(8)
    ivs = np.frombuffer(b"".join([rng.bytes(16) for _ in range(31)]) + iv, dtype=np.uint8).reshape(32, 16)

    batch = ProbeBatch(packet).valid_ivs(key, ivs)
    single = [validate_probe(packet, row.tobytes(), key).valid for row in ivs]

    assert batch.tolist() == single
    assert batch[-1]


def test_short_ciphertext():
    packet = ValidationPacket(bytes(8), "aes128-ctr")

    with pytest.raises(InvalidPacket):
        validate_probe(packet, bytes(16), bytes(16))


def test_validation_lengths():
    packet, iv, key = packet_fixture()

    with pytest.raises(ProbeLengthError):
        validate_probe(packet, iv[:12], key)
    with pytest.raises(ProbeLengthError):
        validate_probe(packet, iv, key + bytes(8))


def test_aead_cannot_be_validated():
    packet = ValidationPacket(bytes(32), "aes256-gcm")

    with pytest.raises(UnsupportedCipher):
        validate_probe(packet, bytes(12), bytes(32))


def test_unknown_boundary_accepts_block_aligned_lengths():
    # Arrange
    spec = lookup_cipher("aes128-ctr")
    iv, key = bytes(range(16)), bytes(range(16, 32))
    plain = frame_payload(b"\x05" + bytes(40), spec.block_len, bytes(255))
    ciphertext = encrypt_packet(plain, spec, iv, key)

    # Act
    prefix = ValidationPacket(ciphertext[:16], spec.name, boundary_known=False)
    exact = ValidationPacket(ciphertext[:16], spec.name)

    # Assert
    assert validate_probe(prefix, iv, key).valid
    assert not validate_probe(exact, iv, key).valid


@pytest.mark.parametrize(["payload_len", "block_len"], (
    (1, 16),
    (11, 16),
    (12, 16),
    (100, 8),
    (0, 8),
))
def test_framing(payload_len, block_len):
    n_padding = padding_for(payload_len, block_len)
    framed = frame_payload(bytes(payload_len), block_len, bytes(255))

    assert 4 <= n_padding <= 255
    assert len(framed) % block_len == 0, f"{len(framed)=}"
    assert len(framed) == 5 + payload_len + n_padding


def test_raw_ciphertext_file(tmp_path):
    path = tmp_path / "packet.bin"
    path.write_bytes(bytes(64))

    packet = load_raw_ciphertext(path, "aes128-ctr", Direction.SERVER_TO_CLIENT)

    assert len(packet.ciphertext) == 64
    assert packet.sequence_number == 0
    assert packet.direction is Direction.SERVER_TO_CLIENT


@pytest.mark.parametrize(["size"], (
    (10,),
    (0,),
))
def test_raw_ciphertext_too_short(tmp_path, size):
    path = tmp_path / "packet.bin"
    path.write_bytes(bytes(size))

    with pytest.raises(FileTooShort):
        load_raw_ciphertext(path, "aes128-ctr")


def test_direction_names():
    assert Direction.parse("s2c") is Direction.SERVER_TO_CLIENT
    assert Direction.parse("client-to-server") is Direction.CLIENT_TO_SERVER
    assert Direction.SERVER_TO_CLIENT.short == "s2c"
