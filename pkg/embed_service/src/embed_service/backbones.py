"""Embedding backbones behind one small interface.

The default backbone wraps the pretrained ViT-B/32 CLIP encoders via
transformers. A deterministic hashed-projection backbone exists for
environments without access to pretrained weights and for contract tests;
it honors the same API and error semantics.
"""

from __future__ import annotations

import hashlib
import io
import threading

import numpy as np


class BackboneLoadError(RuntimeError):
    """The configured backbone could not be brought up."""


class ItemError(ValueError):
    """A single batch item is invalid; carries its index."""

    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(message)


def _decode_image(index: int, data: bytes):
    from PIL import Image, UnidentifiedImageError

    try:
        image = Image.open(io.BytesIO(data))
        image.load()
        return image.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError):
        raise ItemError(index, "cannot decode image") from None


class HashProjectionBackbone:
    """Deterministic stand-in encoder: bytes are hashed to a seeded
    Gaussian vector. No semantics, full contract behavior."""

    # Fixed truncation policy so long inputs embed identically across calls.
    max_text_chars = 2048

    def __init__(self, dim: int = 512):
        self.dim = dim

    @property
    def name(self) -> str:
        return f"hash-projection-{self.dim} (test backbone)"

    def load(self) -> None:
        pass

    def _vector(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim).astype(np.float32)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        return np.stack(
            [self._vector(t[: self.max_text_chars].encode("utf-8")) for t in texts]
        )

    def embed_images(self, images: list[bytes]) -> np.ndarray:
        vectors = []
        for index, data in enumerate(images):
            _decode_image(index, data)  # enforce the same validity rules as a real encoder
            vectors.append(self._vector(data))
        return np.stack(vectors)


class ClipBackbone:
    """Pretrained two-tower text/image encoder (ViT-B/32 by default).

    Inference only; the parameters are never updated. Calls are serialized
    through a lock since the underlying runtime is not guaranteed
    thread-safe, and embeddings must be deterministic regardless of
    request interleaving.
    """

    def __init__(self, model_name: str = "openai/clip-vit-base-patch32"):
        self.model_name = model_name
        self._model = None
        self._processor = None
        self._torch = None
        self._lock = threading.Lock()
        self.dim: int | None = None

    @property
    def name(self) -> str:
        return self.model_name

    def load(self) -> None:
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BackboneLoadError(f"clip backbone needs transformers and torch: {exc}") from None
        try:
            model = CLIPModel.from_pretrained(self.model_name)
            processor = CLIPProcessor.from_pretrained(self.model_name)
        except Exception as exc:
            raise BackboneLoadError(
                f"could not load pretrained weights for {self.model_name!r}: {exc}"
            ) from None
        model.eval()
        self._torch = torch
        self._model = model
        self._processor = processor
        self.dim = int(model.config.projection_dim)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        with self._lock, torch.no_grad():
            inputs = self._processor(
                text=texts, return_tensors="pt", padding=True, truncation=True
            )
            features = self._model.get_text_features(**inputs)
        return features.cpu().numpy().astype(np.float32)

    def embed_images(self, images: list[bytes]) -> np.ndarray:
        decoded = [_decode_image(i, data) for i, data in enumerate(images)]
        torch = self._torch
        with self._lock, torch.no_grad():
            inputs = self._processor(images=decoded, return_tensors="pt")
            features = self._model.get_image_features(**inputs)
        return features.cpu().numpy().astype(np.float32)


def create_backbone(kind: str, dim: int = 512, model_name: str | None = None):
    if kind == "clip":
        return ClipBackbone(model_name or "openai/clip-vit-base-patch32")
    if kind == "hash":
        return HashProjectionBackbone(dim)
    raise ValueError(f"unknown backbone {kind!r} (expected 'clip' or 'hash')")
