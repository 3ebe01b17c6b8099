"""HTTP surface of the embedding sidecar.

Contract: GET /health -> {model, dim}; POST /embed/text {"texts": [...]}
and POST /embed/image {"images_b64": [...]} -> {"embeddings": [[...]]}.
Outputs are raw encoder features (no normalization), order-preserving,
and deterministic per input. Batches beyond the cap get 413; undecodable
images get a per-item 422 detail.
"""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backbones import BackboneLoadError, HashProjectionBackbone, ItemError


class TextBatch(BaseModel):
    texts: list[str]


class ImageBatch(BaseModel):
    images_b64: list[str]


def create_app(backbone=None, max_batch: int = 64, load_now: bool = True) -> FastAPI:
    app = FastAPI(title="embedding sidecar")
    state = {"backbone": backbone or HashProjectionBackbone(), "ready": False, "error": None}

    def startup() -> None:
        try:
            state["backbone"].load()
            state["ready"] = True
        except BackboneLoadError as exc:
            state["error"] = str(exc)

    if load_now:
        startup()
    else:
        app.add_event_handler("startup", startup)

    def require_ready():
        if not state["ready"]:
            detail = state["error"] or "model still warming up"
            raise HTTPException(status_code=503, detail=detail)
        return state["backbone"]

    def check_batch(n: int) -> None:
        if n > max_batch:
            raise HTTPException(
                status_code=413, detail=f"batch of {n} exceeds the {max_batch}-item cap"
            )

    @app.get("/health")
    def health():
        backbone = require_ready()
        return {"model": backbone.name, "dim": backbone.dim}

    @app.post("/embed/text")
    def embed_text(batch: TextBatch):
        backbone = require_ready()
        check_batch(len(batch.texts))
        vectors = backbone.embed_texts(batch.texts) if batch.texts else []
        return {"embeddings": [v.tolist() for v in vectors]}

    @app.post("/embed/image")
    def embed_image(batch: ImageBatch):
        backbone = require_ready()
        check_batch(len(batch.images_b64))
        decoded: list[bytes] = []
        bad_items = []
        for index, payload in enumerate(batch.images_b64):
            try:
                decoded.append(base64.b64decode(payload, validate=True))
            except (binascii.Error, ValueError):
                bad_items.append({"index": index, "error": "invalid base64"})
        if bad_items:
            raise HTTPException(status_code=422, detail={"items": bad_items})
        try:
            vectors = backbone.embed_images(decoded) if decoded else []
        except ItemError as exc:
            raise HTTPException(
                status_code=422, detail={"items": [{"index": exc.index, "error": str(exc)}]}
            ) from None
        return {"embeddings": [v.tolist() for v in vectors]}

    return app
