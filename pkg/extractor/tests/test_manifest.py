"""Pose manifest parsing and validation."""

import numpy as np
import pytest

from embed_extractor.manifest import HEADER, ManifestError, PoseManifest


def test_read_valid_manifest(image_corpus):
    manifest, _, names = image_corpus
    m = PoseManifest.read(manifest)
    assert len(m) == len(names)
    assert [r.image for r in m.rows] == names
    X = m.poses()
    assert X.shape == (len(names), 7)
    assert np.allclose(np.linalg.norm(X[:, 3:], axis=1), 1.0)
    assert m.rows[2].timestamp == pytest.approx(0.2)


def test_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("img,x,y,z,a,b,c,d,t\nfoo.png,0,0,0,1,0,0,0,0\n")
    with pytest.raises(ManifestError, match="header"):
        PoseManifest.read(p)


def test_rejects_non_unit_quaternion(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(HEADER) + "\nfoo.png,0,0,0,2,0,0,0,0\n")
    with pytest.raises(ManifestError, match="quaternion"):
        PoseManifest.read(p)


def test_rejects_malformed_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(",".join(HEADER) + "\nfoo.png,0,0\n")
    with pytest.raises(ManifestError, match="expected 9 fields"):
        PoseManifest.read(p)
    p.write_text(",".join(HEADER) + "\nfoo.png,a,0,0,1,0,0,0,0\n")
    with pytest.raises(ManifestError):
        PoseManifest.read(p)
    p.write_text(",".join(HEADER) + "\n,0,0,0,1,0,0,0,0\n")
    with pytest.raises(ManifestError, match="empty image"):
        PoseManifest.read(p)


def test_rejects_empty(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(ManifestError):
        PoseManifest.read(p)
    p.write_text(",".join(HEADER) + "\n")
    with pytest.raises(ManifestError, match="no data rows"):
        PoseManifest.read(p)
