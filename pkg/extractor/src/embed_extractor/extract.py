"""The two operations: manifest + images -> dataset file, and
text -> query embedding file.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .formats import write_dataset, write_query_embedding
from .manifest import PoseManifest

BATCH_SIZE = 64


def _load_image(path: Path):
    try:
        with Image.open(path) as im:
            im.load()
            return im.convert("RGB")
    except (FileNotFoundError, UnidentifiedImageError, OSError):
        return None


def extract(manifest: PoseManifest, image_dir, encoder, out_path) -> Path:
    """Embed every readable manifest image; write poses + embeddings.

    Unreadable images are skipped with a warning and listed in a JSON
    sidecar log next to the output. Output record order follows the
    manifest regardless of internal batching.
    """
    image_dir = Path(image_dir)
    out_path = Path(out_path)
    kept_poses = []
    skipped = []
    chunks = []
    batch_imgs, batch_rows = [], []

    def flush():
        if batch_imgs:
            chunks.append(encoder.embed_images(batch_imgs))
            kept_poses.extend(batch_rows)
            batch_imgs.clear()
            batch_rows.clear()

    for row in manifest.rows:
        img = _load_image(image_dir / row.image)
        if img is None:
            warnings.warn(f"skipping unreadable image {row.image}")
            skipped.append(row.image)
            continue
        batch_imgs.append(img)
        batch_rows.append(row.pose)
        if len(batch_imgs) >= BATCH_SIZE:
            flush()
    flush()

    if not kept_poses:
        raise ValueError("no readable images in the manifest")
    X = np.array(kept_poses)
    Z = np.concatenate(chunks, axis=0)
    write_dataset(X, Z, out_path)
    log = {
        "encoder": encoder.name,
        "d": encoder.d,
        "manifest_rows": len(manifest),
        "records": int(X.shape[0]),
        "skipped": skipped,
    }
    Path(str(out_path) + ".log.json").write_text(json.dumps(log, indent=2) + "\n")
    return out_path


def embed_text(text: str, encoder, out_path) -> Path:
    """Write the normalized text embedding as a query file."""
    if not text or not text.strip():
        raise ValueError("query text must be nonempty")
    v = encoder.embed_texts([text])[0]
    return write_query_embedding(v, out_path)
