import struct

import numpy as np
import pytest

from sparseface import smx
from sparseface.errors import DataError, NumericalError


def roundtrip(tmp_path, matrix):
    path = tmp_path / "m.smx"
    smx.save_matrix(matrix, path)
    return smx.load_matrix(path), path


def test_small_roundtrip_and_file_size(tmp_path):
    m = np.arange(1.0, 7.0).reshape(2, 3)
    out, path = roundtrip(tmp_path, m)
    assert out.shape == (2, 3)
    assert out.tobytes() == m.tobytes()
    # 16-byte header (magic + rows + cols + reserved) + 6 float64 values
    assert path.stat().st_size == 16 + 48


def test_byte_layout_is_column_major_little_endian(tmp_path):
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    _, path = roundtrip(tmp_path, m)
    blob = path.read_bytes()
    assert blob[0:4] == b"SMX1"
    assert struct.unpack("<I", blob[4:8])[0] == 2
    assert struct.unpack("<I", blob[8:12])[0] == 2
    assert struct.unpack("<I", blob[12:16])[0] == 0
    values = struct.unpack("<4d", blob[16:])
    assert values == (1.0, 2.0, 3.0, 4.0)  # columns first


def test_dictionary_shaped_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((700, 143))
    out, _ = roundtrip(tmp_path, m)
    assert out.tobytes() == m.tobytes()


def test_roundtrip_preserves_special_values(tmp_path):
    m = np.array([[-0.0, 5e-324], [1e308, -1e-308]])
    out, _ = roundtrip(tmp_path, m)
    assert out.tobytes() == m.tobytes()


def test_random_roundtrips_bit_exact(tmp_path):
    rng = np.random.default_rng(99)
    for _ in range(50):
        rows = int(rng.integers(1, 30))
        cols = int(rng.integers(1, 30))
        m = rng.standard_normal((rows, cols)) * 10.0 ** rng.integers(-12, 12)
        out, _ = roundtrip(tmp_path, m)
        assert out.shape == (rows, cols)
        assert out.tobytes() == m.tobytes()


def test_empty_matrix_rejected(tmp_path):
    with pytest.raises(DataError):
        smx.save_matrix(np.zeros((0, 0)), tmp_path / "e.smx")
    with pytest.raises(DataError):
        smx.save_matrix(np.zeros((3, 0)), tmp_path / "e.smx")


def test_non_finite_rejected(tmp_path):
    with pytest.raises(NumericalError):
        smx.save_matrix(np.array([[1.0, np.nan]]), tmp_path / "n.smx")
    with pytest.raises(NumericalError):
        smx.save_matrix(np.array([[np.inf]]), tmp_path / "n.smx")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.smx"
    smx.save_matrix(np.ones((2, 2)), path)
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="magic"):
        smx.load_matrix(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.smx"
    smx.save_matrix(np.ones((4, 4)), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(DataError, match="payload"):
        smx.load_matrix(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "tail.smx"
    smx.save_matrix(np.ones((2, 2)), path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(DataError, match="payload"):
        smx.load_matrix(path)


def test_nonzero_reserved_rejected(tmp_path):
    path = tmp_path / "res.smx"
    smx.save_matrix(np.ones((1, 1)), path)
    blob = bytearray(path.read_bytes())
    blob[12] = 7
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="reserved"):
        smx.load_matrix(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "hdr.smx"
    path.write_bytes(b"SMX1\x01\x00")
    with pytest.raises(DataError, match="header"):
        smx.load_matrix(path)


def test_bundle_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    bundle = smx.ModelBundle(
        dictionary=rng.standard_normal((8, 12)),
        projection=rng.standard_normal((8, 20)),
        svm_weights=rng.standard_normal((3, 12)),
        svm_bias=rng.standard_normal((3, 1)),
        meta={"class_names": ["a", "b", "c"], "m": 8, "L": 2, "C": 1.0,
              "seeds": {"master": 0}},
    )
    smx.save_bundle(tmp_path / "model", bundle)
    loaded = smx.load_bundle(tmp_path / "model")
    assert loaded.dictionary.tobytes() == bundle.dictionary.tobytes()
    assert loaded.projection.tobytes() == bundle.projection.tobytes()
    assert loaded.svm_weights.tobytes() == bundle.svm_weights.tobytes()
    assert loaded.svm_bias.tobytes() == bundle.svm_bias.tobytes()
    assert loaded.meta["class_names"] == ["a", "b", "c"]


def test_missing_bundle_dir(tmp_path):
    with pytest.raises(DataError, match="bundle"):
        smx.load_bundle(tmp_path / "nope")
