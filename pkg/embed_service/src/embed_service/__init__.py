"""Embedding sidecar service."""

from .app import create_app
from .backbones import ClipBackbone, HashProjectionBackbone, create_backbone

__version__ = "0.1.0"

__all__ = ["ClipBackbone", "HashProjectionBackbone", "create_app", "create_backbone", "__version__"]
