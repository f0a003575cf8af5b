"""Stdio protocol server exposing image encoders to the maskprobe detector.

The bridge speaks the newline-delimited JSON protocol documented in the
repository root README: a ready/dim handshake on startup, then one
embedding (or error) response per request, matched by id. It never imports
the detector; the protocol is the entire contract between the two.
"""
from .config import BridgeConfig, BridgeError
from .encoders import EchoEncoder, EncoderBase, HogEncoder, TorchvisionEncoder, build_encoder
from .server import serve

__version__ = "0.1.0"

__all__ = [
    "BridgeConfig",
    "BridgeError",
    "EchoEncoder",
    "EncoderBase",
    "HogEncoder",
    "TorchvisionEncoder",
    "build_encoder",
    "serve",
    "__version__",
]
