"""Binary format writers and the query reader."""

import struct

import numpy as np
import pytest

from embed_extractor.formats import (
    DATASET_MAGIC,
    QUERY_MAGIC,
    FormatError,
    dataset_bytes,
    query_bytes,
    read_query_embedding,
    write_query_embedding,
)


def test_dataset_layout():
    X = np.zeros((3, 7))
    X[:, 3] = 1.0
    Z = np.ones((3, 4)) / 2.0
    raw = dataset_bytes(X, Z)
    assert raw[:8] == DATASET_MAGIC == b"LAMPDS1\x00"
    version, d, n = struct.unpack("<IIQ", raw[8:24])
    assert (version, d, n) == (1, 4, 3)
    assert len(raw) == 24 + 3 * (7 + 4) * 4
    rec = np.frombuffer(raw[24:], dtype="<f4").reshape(3, 11)
    assert np.allclose(rec[:, :7], X)
    assert np.allclose(rec[:, 7:], Z)


def test_dataset_rejects_bad_shapes():
    with pytest.raises(FormatError):
        dataset_bytes(np.zeros((2, 6)), np.zeros((2, 4)))
    with pytest.raises(FormatError):
        dataset_bytes(np.zeros((2, 7)), np.zeros((3, 4)))


def test_query_roundtrip(tmp_path):
    v = np.arange(5.0) / np.linalg.norm(np.arange(5.0))
    p = tmp_path / "q.bin"
    write_query_embedding(v, p)
    raw = p.read_bytes()
    assert raw[:8] == QUERY_MAGIC == b"LAMPQRY1"
    assert struct.unpack("<I", raw[8:12]) == (5,)
    back = read_query_embedding(p)
    assert np.allclose(back, v.astype(np.float32))


def test_query_rejects_corruption(tmp_path):
    v = np.ones(4) / 2.0
    good = query_bytes(v)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + good[8:])
    with pytest.raises(FormatError):
        read_query_embedding(bad)
    bad.write_bytes(good[:-4])
    with pytest.raises(FormatError):
        read_query_embedding(bad)
    with pytest.raises(FormatError):
        query_bytes(np.zeros((2, 2)))
