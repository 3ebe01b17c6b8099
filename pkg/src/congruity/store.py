"""Embedding persistence and the embedding-service HTTP client.

Embeddings are plain one-dimensional float32 numpy arrays. They are stored
and transported unnormalized; normalization happens once, in scoring.

Store file layout (little-endian):
    magic "EMB1" | u32 version=1 | u32 dim | u64 count |
    count x { u32 id_len | id UTF-8 bytes | dim x f32 }
Entries are written sorted by id, so byte output is a pure function of
store content.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import requests

from .errors import ServiceContractError, ServiceError, StoreFormatError, TransportError

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<I")


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Coerce values to a finite float32 vector, optionally checking dim."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"embedding must be a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"embedding has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding contains NaN or infinite values")
    return arr


class EmbeddingStore:
    """Fixed-dimension embeddings keyed by string id."""

    def __init__(self, dim: int = 512):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self._entries: dict[str, np.ndarray] = {}

    def add(self, key: str, values) -> None:
        if not key:
            raise ValueError("store key must be non-empty")
        self._entries[key] = as_embedding(values, self.dim)

    def get(self, key: str) -> np.ndarray:
        return self._entries[key]

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self) -> Iterator[str]:
        return iter(self._entries)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._entries.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.dim == other.dim
            and self._entries.keys() == other._entries.keys()
            and all(np.array_equal(v, other._entries[k]) for k, v in self._entries.items())
        )


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store in the binary format; deterministic for equal content."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, store.dim, len(store)))
        for key in sorted(store.keys()):
            encoded = key.encode("utf-8")
            fh.write(_ID_LEN.pack(len(encoded)))
            fh.write(encoded)
            fh.write(store.get(key).astype("<f4", copy=False).tobytes())


def read_store(path: str | Path) -> EmbeddingStore:
    """Read a store file, validating magic, version, and payload integrity."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise StoreFormatError(f"{path}: not an embedding file")
    _, version, dim, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise StoreFormatError(f"{path}: dim must be positive")
    store = EmbeddingStore(dim)
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for _ in range(count):
        if offset + _ID_LEN.size > len(data):
            raise StoreFormatError(f"{path}: truncated at byte offset {offset}")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(data):
            raise StoreFormatError(f"{path}: truncated at byte offset {offset}")
        key = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(values)):
            raise StoreFormatError(f"{path}: non-finite value in embedding {key!r}")
        store._entries[key] = values
    if offset != len(data):
        raise StoreFormatError(f"{path}: {len(data) - offset} trailing bytes after last entry")
    return store


@dataclass(frozen=True)
class ServiceInfo:
    model: str
    dim: int


class EmbeddingClient:
    """Client for the embedding sidecar HTTP contract.

    Endpoints: GET /health -> {model, dim}; POST /embed/text with
    {"texts": [...]}; POST /embed/image with {"images_b64": [...]}; both
    answer {"embeddings": [[...]]}. Every returned vector is checked
    against the /health dimension.
    """

    def __init__(self, base_url: str, timeout: float = 60.0, batch_size: int = 64):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.batch_size = batch_size
        self._session = requests.Session()
        self._info: ServiceInfo | None = None

    def health(self) -> ServiceInfo:
        payload = self._request("GET", "/health")
        try:
            info = ServiceInfo(model=str(payload["model"]), dim=int(payload["dim"]))
        except (KeyError, TypeError, ValueError):
            raise ServiceContractError(f"malformed /health response: {payload!r}") from None
        self._info = info
        return info

    def fetch_text_embeddings(self, texts: list[str]) -> list[np.ndarray]:
        """Embed texts, in order. Vectors come back exactly as produced."""
        return self._fetch("/embed/text", "texts", list(texts))

    def fetch_image_embeddings(self, images_b64: list[str]) -> list[np.ndarray]:
        """Embed base64-encoded images, in order."""
        return self._fetch("/embed/image", "images_b64", list(images_b64))

    def _fetch(self, endpoint: str, field: str, items: list) -> list[np.ndarray]:
        if not items:
            return []
        if self._info is None:
            self.health()
        dim = self._info.dim
        out: list[np.ndarray] = []
        for start in range(0, len(items), self.batch_size):
            batch = items[start : start + self.batch_size]
            payload = self._request("POST", endpoint, json={field: batch})
            vectors = payload.get("embeddings") if isinstance(payload, dict) else None
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise ServiceContractError(
                    f"{endpoint}: expected {len(batch)} embeddings, got "
                    f"{len(vectors) if isinstance(vectors, list) else 'none'}"
                )
            for vec in vectors:
                if len(vec) != dim:
                    raise ServiceContractError(
                        f"{endpoint}: embedding dim {len(vec)} does not match /health dim {dim}"
                    )
                out.append(as_embedding(vec, dim))
        return out

    def _request(self, method: str, endpoint: str, json=None) -> dict:
        url = self.base_url + endpoint
        try:
            resp = self._session.request(method, url, json=json, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"embedding service unreachable at {url}: {exc}") from None
        if resp.status_code // 100 != 2:
            raise ServiceError(
                f"{method} {url} failed with status {resp.status_code}: "
                f"{_describe_error_body(resp)}",
                status=resp.status_code,
            )
        try:
            return resp.json()
        except ValueError:
            raise ServiceContractError(f"{method} {url}: response is not JSON") from None


def _describe_error_body(resp: requests.Response) -> str:
    """Render an error response, expanding per-item failure details."""
    try:
        detail = resp.json().get("detail")
    except ValueError:
        return resp.text[:200]
    if isinstance(detail, dict) and isinstance(detail.get("items"), list):
        parts = [f"item {it.get('index')}: {it.get('error')}" for it in detail["items"]]
        return "; ".join(parts)
    return repr(detail)
