import struct

import numpy as np
import pytest

from latentplan import io


def test_tensor_round_trip(tmp_path):
    x = np.random.default_rng(0).random((3, 4, 5)).astype(np.float32)
    io.save_tensor(tmp_path / "x.lpt", x)
    np.testing.assert_array_equal(io.load_tensor(tmp_path / "x.lpt"), x)


def test_tensor_layout():
    blob = io.tensor_bytes(np.array([[1.0, 2.0]], dtype=np.float32))
    assert blob[:4] == b"LPT1"
    assert struct.unpack("<QQQ", blob[4:28]) == (2, 1, 2)
    assert struct.unpack("<2f", blob[28:]) == (1.0, 2.0)


def test_bits_lsb_first():
    blob = io.bits_bytes(np.array([[1, 0, 1, 1, 0, 0, 0, 0, 1]]))
    assert blob[:4] == b"LPB1"
    assert struct.unpack("<QQ", blob[4:20]) == (1, 9)
    assert blob[20:] == bytes([0b00001101, 0b00000001])


def test_bits_round_trip():
    b = np.random.default_rng(1).integers(0, 2, (17, 36)).astype(np.uint8)
    np.testing.assert_array_equal(io.bits_from_bytes(io.bits_bytes(b)), b)


@pytest.mark.parametrize("blob", [b"LPT0" + bytes(8), b"LPT1" + struct.pack("<QQ", 1, 4) + bytes(3)])
def test_tensor_rejects_malformed(blob):
    with pytest.raises(io.FormatError):
        io.tensor_from_bytes(blob)


def test_bits_reject_non_binary():
    with pytest.raises(ValueError):
        io.bits_bytes(np.array([[0, 2]]))
