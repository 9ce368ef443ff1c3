"""Bit-exact binary matrix serialization (SMX1) and model bundles.

SMX1 layout: bytes 0-3 magic ``SMX1``, bytes 4-7 row count (u32 LE),
bytes 8-11 column count (u32 LE), bytes 12-15 reserved zero, then
rows*cols IEEE-754 little-endian float64 values in column-major order.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

MAGIC = b"SMX1"
_HEADER = struct.Struct("<4sIII")
_U32_MAX = 0xFFFFFFFF

DICTIONARY_FILE = "dictionary.smx"
PROJECTION_FILE = "projection.smx"
SVM_WEIGHTS_FILE = "svm_weights.smx"
SVM_BIAS_FILE = "svm_bias.smx"
META_FILE = "meta.json"


def save_matrix(matrix: np.ndarray, path) -> None:
    """Write a finite 2-D float64 matrix to `path` in SMX1 format.

    Round-tripping through load_matrix reproduces every value bit for
    bit.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got ndim={m.ndim}")
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        raise DataError(f"refusing to serialize degenerate {rows}x{cols} matrix")
    if rows > _U32_MAX or cols > _U32_MAX:
        raise DataError(f"matrix dimensions {rows}x{cols} overflow the u32 header")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, 0))
        fh.write(m.astype("<f8").tobytes(order="F"))


def load_matrix(path) -> np.ndarray:
    """Read an SMX1 file back into a (rows, cols) float64 array."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, rows, cols, reserved = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if reserved != 0:
            raise DataError(f"{path}: reserved header word is {reserved}, expected 0")
        if rows == 0 or cols == 0:
            raise DataError(f"{path}: degenerate dimensions {rows}x{cols}")
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise DataError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8")
    return values.reshape((rows, cols), order="F").copy()


@dataclass
class ModelBundle:
    """Everything needed to classify new samples: projection, dictionary,
    SVM parameters, and run metadata (class names, m, L, C, seeds)."""

    dictionary: np.ndarray
    projection: np.ndarray
    svm_weights: np.ndarray
    svm_bias: np.ndarray
    meta: dict


def save_bundle(dirpath, bundle: ModelBundle) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_matrix(bundle.dictionary, os.path.join(dirpath, DICTIONARY_FILE))
    save_matrix(bundle.projection, os.path.join(dirpath, PROJECTION_FILE))
    save_matrix(bundle.svm_weights, os.path.join(dirpath, SVM_WEIGHTS_FILE))
    save_matrix(bundle.svm_bias, os.path.join(dirpath, SVM_BIAS_FILE))
    with open(os.path.join(dirpath, META_FILE), "w", encoding="utf-8") as fh:
        json.dump(bundle.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(dirpath) -> ModelBundle:
    meta_path = os.path.join(dirpath, META_FILE)
    if not os.path.isfile(meta_path):
        raise DataError(f"{dirpath}: not a model bundle ({META_FILE} missing)")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    return ModelBundle(
        dictionary=load_matrix(os.path.join(dirpath, DICTIONARY_FILE)),
        projection=load_matrix(os.path.join(dirpath, PROJECTION_FILE)),
        svm_weights=load_matrix(os.path.join(dirpath, SVM_WEIGHTS_FILE)),
        svm_bias=load_matrix(os.path.join(dirpath, SVM_BIAS_FILE)),
        meta=meta,
    )
