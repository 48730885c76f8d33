import csv

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def image_corpus(tmp_path):
    """Six small solid-ish color images plus a manifest referencing them."""
    img_dir = tmp_path / "images"
    img_dir.mkdir()
    rng = np.random.default_rng(0)
    names = []
    for i, color in enumerate(
        [(200, 30, 30), (30, 200, 30), (30, 30, 200),
         (200, 200, 30), (30, 200, 200), (120, 120, 120)]
    ):
        arr = np.tile(np.array(color, dtype=np.uint8), (24, 24, 1))
        arr = np.clip(arr + rng.integers(-20, 20, arr.shape), 0, 255).astype(np.uint8)
        name = f"frame_{i:03d}.png"
        Image.fromarray(arr).save(img_dir / name)
        names.append(name)

    manifest = tmp_path / "poses.csv"
    with open(manifest, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image", "tx", "ty", "tz", "qw", "qx", "qy", "qz", "timestamp"])
        for i, name in enumerate(names):
            yaw = i * 0.7
            w.writerow([name, float(i), float(2 * i), 0.0,
                        np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2), float(i) * 0.1])
    return manifest, img_dir, names
