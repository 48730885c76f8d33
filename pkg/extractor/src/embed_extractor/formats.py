"""Binary writers for the navigation stack's file formats.

The dataset layout mirrors the consumer exactly: 8 magic bytes, a
little-endian <IIQ header (version, embedding width, record count), then
count rows of (7 pose + d embedding) float32. Query embeddings are 8 magic
bytes, u32 width, then d float32 values.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

DATASET_MAGIC = b"LAMPDS1\x00"
DATASET_VERSION = 1
QUERY_MAGIC = b"LAMPQRY1"


class FormatError(ValueError):
    pass


def dataset_bytes(X: np.ndarray, Z: np.ndarray) -> bytes:
    X = np.asarray(X)
    Z = np.asarray(Z)
    if X.ndim != 2 or X.shape[1] != 7 or Z.ndim != 2 or X.shape[0] != Z.shape[0]:
        raise FormatError(f"bad dataset shapes {X.shape} / {Z.shape}")
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<IIQ", DATASET_VERSION, Z.shape[1], X.shape[0]))
    buf.write(np.concatenate([X, Z], axis=1).astype("<f4").tobytes())
    return buf.getvalue()


def write_dataset(X: np.ndarray, Z: np.ndarray, path) -> Path:
    path = Path(path)
    path.write_bytes(dataset_bytes(X, Z))
    return path


def query_bytes(v: np.ndarray) -> bytes:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] == 0:
        raise FormatError(f"query embedding must be a nonempty vector, got {v.shape}")
    return QUERY_MAGIC + struct.pack("<I", v.shape[0]) + v.astype("<f4").tobytes()


def write_query_embedding(v: np.ndarray, path) -> Path:
    path = Path(path)
    path.write_bytes(query_bytes(v))
    return path


def read_query_embedding(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != QUERY_MAGIC:
        raise FormatError("bad magic bytes")
    if len(raw) < 12:
        raise FormatError("truncated header")
    (d,) = struct.unpack("<I", raw[8:12])
    body = raw[12:]
    if len(body) != 4 * d:
        raise FormatError(f"body bytes {len(body)} do not match width {d}")
    return np.frombuffer(body, dtype="<f4").astype(float)
