"""Encoder registry.

The default encoder is a deterministic feature-hashing projector that needs
no downloaded weights: useful for format plumbing, fixtures, and offline
pipelines. A CLIP-based encoder is registered as well and activates when
transformers weights are available locally.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image

DEFAULT_ENCODER = "hashed-512"


class EncoderLoadError(RuntimeError):
    pass


def _seeded_rng(*parts: str) -> np.random.Generator:
    digest = hashlib.blake2b("/".join(parts).encode(), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class HashedEncoder:
    """Deterministic image and text embeddings via fixed random projections.

    Images: 16x16 RGB thumbnail plus per-channel histograms, projected to d.
    Text: signed feature hashing of words and character trigrams, projected
    to d. Both are l2-normalized. No semantics beyond low-level appearance
    and lexical overlap; intended for offline and fixture use.
    """

    THUMB = 16
    HIST_BINS = 16
    TEXT_BUCKETS = 4096

    def __init__(self, name: str, d: int = 512):
        self.name = name
        self.d = d
        n_img = 3 * self.THUMB * self.THUMB + 3 * self.HIST_BINS
        self._proj_img = _seeded_rng(name, "image").standard_normal((n_img, d))
        self._proj_img /= np.sqrt(n_img)
        self._proj_txt = _seeded_rng(name, "text").standard_normal((self.TEXT_BUCKETS, d))
        self._proj_txt /= np.sqrt(self.TEXT_BUCKETS)

    def _image_features(self, img: Image.Image) -> np.ndarray:
        rgb = img.convert("RGB").resize((self.THUMB, self.THUMB), Image.BILINEAR)
        arr = np.asarray(rgb, dtype=float) / 255.0
        hists = [
            np.histogram(arr[:, :, c], bins=self.HIST_BINS, range=(0.0, 1.0))[0]
            / arr[:, :, c].size
            for c in range(3)
        ]
        return np.concatenate([arr.reshape(-1), *hists])

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        if not images:
            return np.zeros((0, self.d))
        F = np.stack([self._image_features(im) for im in images])
        out = F @ self._proj_img
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        return out / np.maximum(norms, 1e-12)

    def _text_features(self, text: str) -> np.ndarray:
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        grams = list(tokens)
        for tok in tokens:
            padded = f"^{tok}$"
            grams.extend(padded[i : i + 3] for i in range(len(padded) - 2))
        v = np.zeros(self.TEXT_BUCKETS)
        for g in grams:
            h = hashlib.blake2b(g.encode(), digest_size=8).digest()
            idx = int.from_bytes(h[:4], "little") % self.TEXT_BUCKETS
            sign = 1.0 if h[4] & 1 else -1.0
            v[idx] += sign
        return v

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.d))
        F = np.stack([self._text_features(t) for t in texts])
        out = F @ self._proj_txt
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValueError("text produced no hashable tokens")
        return out / norms


class ClipEncoder:
    """CLIP image/text encoder through transformers; needs local weights."""

    def __init__(self, name: str, model_id: str = "openai/clip-vit-base-patch32"):
        self.name = name
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._proc = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load {model_id}: {exc}") from exc
        self._model.eval()
        self.d = int(self._model.config.projection_dim)

    def embed_images(self, images: list[Image.Image]) -> np.ndarray:
        import torch

        if not images:
            return np.zeros((0, self.d))
        with torch.no_grad():
            inputs = self._proc(images=[im.convert("RGB") for im in images],
                                return_tensors="pt")
            feats = self._model.get_image_features(**inputs).numpy().astype(float)
        return feats / np.linalg.norm(feats, axis=1, keepdims=True)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        import torch

        if not texts:
            return np.zeros((0, self.d))
        with torch.no_grad():
            inputs = self._proc(text=texts, return_tensors="pt", padding=True)
            feats = self._model.get_text_features(**inputs).numpy().astype(float)
        return feats / np.linalg.norm(feats, axis=1, keepdims=True)


_REGISTRY = {
    "hashed-512": lambda name: HashedEncoder(name, d=512),
    "hashed-32": lambda name: HashedEncoder(name, d=32),
    "clip-vit-b32": lambda name: ClipEncoder(name),
}


def list_encoders() -> list[str]:
    return sorted(_REGISTRY)


def get_encoder(encoder_id: str = DEFAULT_ENCODER):
    if encoder_id not in _REGISTRY:
        raise EncoderLoadError(
            f"unknown encoder {encoder_id!r}; known: {', '.join(list_encoders())}"
        )
    return _REGISTRY[encoder_id](encoder_id)
