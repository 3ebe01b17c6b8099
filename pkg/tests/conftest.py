"""Shared fixtures: a programmable stand-in for the embedding sidecar."""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest


def deterministic_vector(payload: bytes, dim: int) -> list[float]:
    """Pseudo-random but reproducible embedding derived from input bytes."""
    digest = hashlib.sha256(payload).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim).astype(np.float32).tolist()


class MockEmbeddingServer:
    """Implements the sidecar HTTP contract with injectable misbehavior.

    response_dim lets tests violate the /health dimension; fail_status
    forces a blanket HTTP error. An image payload equal to BROKEN_IMAGE
    triggers the per-item 422 error path.
    """

    BROKEN_IMAGE = "bm90LWFuLWltYWdl"  # base64("not-an-image")

    def __init__(self, dim: int = 8):
        self.dim = dim
        self.response_dim = dim
        self.fail_status: int | None = None
        self.model = "mock-encoder"
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, payload) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if outer.fail_status:
                    self._send(outer.fail_status, {"detail": "injected failure"})
                elif self.path == "/health":
                    self._send(200, {"model": outer.model, "dim": outer.dim})
                else:
                    self._send(404, {"detail": "not found"})

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                request = json.loads(self.rfile.read(length))
                if outer.fail_status:
                    self._send(outer.fail_status, {"detail": "injected failure"})
                    return
                if self.path == "/embed/text":
                    items = [t.encode("utf-8") for t in request["texts"]]
                elif self.path == "/embed/image":
                    broken = [
                        {"index": i, "error": "cannot decode image"}
                        for i, img in enumerate(request["images_b64"])
                        if img == MockEmbeddingServer.BROKEN_IMAGE
                    ]
                    if broken:
                        self._send(422, {"detail": {"items": broken}})
                        return
                    items = [img.encode("ascii") for img in request["images_b64"]]
                else:
                    self._send(404, {"detail": "not found"})
                    return
                vectors = [deterministic_vector(item, outer.response_dim) for item in items]
                self._send(200, {"embeddings": vectors})

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def mock_embedding_server():
    server = MockEmbeddingServer()
    yield server
    server.close()
