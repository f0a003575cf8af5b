"""Encoder implementations behind the stdio protocol.

Each encoder consumes raw uint8 HxWxC arrays exactly as they arrive on the
wire and owns its preprocessing (grayscale conversion, resizing,
normalization). Masking happens on the client before pixels are sent, so
the trigger-destroying occlusion is applied to the raw image, never to a
resized copy.
"""
from __future__ import annotations

import hashlib
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .config import BridgeConfig, BridgeError


class EncoderBase:
    """Batch encoder with a fixed output dimension, probed at load time."""

    dim: int

    def encode_batch(self, images: Sequence[np.ndarray]) -> List[List[float]]:
        raise NotImplementedError


class EchoEncoder(EncoderBase):
    """Hash projection of the raw pixels to a unit vector.

    The construction is fixed byte for byte so independent implementations
    agree exactly: base = SHA-256 of b"ECHO1" + u32le(h) + u32le(w) +
    u32le(c) + row-major pixels; component j is the first 8 bytes of
    SHA-256(base + u32le(j)) as a little-endian unsigned integer u, mapped
    to u / 2**63 - 1.0; the vector is divided by the square root of the
    left-to-right float64 sum of squared components. Every arithmetic step
    is IEEE-754 double precision in the order written.
    """

    def __init__(self, dim: int):
        self.dim = dim

    def _one(self, image: np.ndarray) -> List[float]:
        h, w, c = image.shape
        header = hashlib.sha256()
        header.update(b"ECHO1")
        header.update(h.to_bytes(4, "little"))
        header.update(w.to_bytes(4, "little"))
        header.update(c.to_bytes(4, "little"))
        header.update(np.ascontiguousarray(image).tobytes())
        base = header.digest()
        values = []
        for j in range(self.dim):
            digest = hashlib.sha256(base + j.to_bytes(4, "little")).digest()
            u = int.from_bytes(digest[:8], "little")
            values.append(u / 2**63 - 1.0)
        total = 0.0
        for v in values:
            total += v * v
        norm = total**0.5
        return [v / norm for v in values]

    def encode_batch(self, images):
        return [self._one(image) for image in images]


class HogEncoder(EncoderBase):
    """Gradient-histogram features over a resized grayscale copy.

    Two intensity moments (mean, standard deviation over [0,1] pixels) are
    appended so the vector never collapses to zero on flat inputs, which
    would make cosine distance undefined downstream.
    """

    def __init__(self, resolution: int = 64):
        from skimage.feature import hog  # deferred: optional heavyweight import

        self._hog = hog
        self.resolution = resolution
        self.dim = len(self._one(np.zeros((resolution, resolution, 3), dtype=np.uint8)))

    def _one(self, image: np.ndarray) -> List[float]:
        pil = Image.fromarray(image if image.shape[2] == 3 else image[:, :, 0],
                              mode="RGB" if image.shape[2] == 3 else "L")
        gray = pil.convert("L").resize((self.resolution, self.resolution), Image.BILINEAR)
        pixels = np.asarray(gray, dtype=np.float64) / 255.0
        features = self._hog(
            pixels,
            orientations=9,
            pixels_per_cell=(16, 16),
            cells_per_block=(2, 2),
            block_norm="L2-Hys",
            feature_vector=True,
        )
        moments = [float(pixels.mean()), float(pixels.std())]
        return [float(v) for v in features] + moments

    def encode_batch(self, images):
        for image in images:
            if image.shape[2] not in (1, 3):
                raise BridgeError(f"hog encoder needs 1 or 3 channels, got {image.shape[2]}")
        return [self._one(image) for image in images]


class TorchvisionEncoder(EncoderBase):
    """Penultimate-layer features of a torchvision classification backbone.

    Loads pretrained weights, so it needs either network access or a local
    weight cache; a failed load is fatal and must happen before the
    handshake. Inference runs in eval mode under no_grad, making repeated
    requests bit-identical.
    """

    def __init__(self, name: str, device: str = "cpu", resolution: int = 224,
                 mean: Optional[Tuple[float, ...]] = None,
                 std: Optional[Tuple[float, ...]] = None):
        try:
            import torch
            from torchvision import models
        except ImportError as exc:
            raise BridgeError(f"torchvision mode needs torch and torchvision: {exc}") from exc
        self._torch = torch
        try:
            model = models.get_model(name, weights="DEFAULT")
        except Exception as exc:
            raise BridgeError(f"cannot load torchvision model {name!r}: {exc}") from exc
        # Drop the classification head; pool output becomes the embedding.
        self._backbone = torch.nn.Sequential(*list(model.children())[:-1]).to(device).eval()
        self._device = device
        self.resolution = resolution
        self._mean = mean if mean is not None else (0.485, 0.456, 0.406)
        self._std = std if std is not None else (0.229, 0.224, 0.225)
        with torch.no_grad():
            probe = torch.zeros(1, 3, resolution, resolution, device=device)
            out = self._backbone(probe).flatten(1)
        self.dim = int(out.shape[1])

    def _prepare(self, image: np.ndarray):
        pil = Image.fromarray(image if image.shape[2] == 3 else image[:, :, 0],
                              mode="RGB" if image.shape[2] == 3 else "L").convert("RGB")
        pil = pil.resize((self.resolution, self.resolution), Image.BILINEAR)
        arr = np.asarray(pil, dtype=np.float32) / 255.0
        arr = (arr - np.asarray(self._mean, dtype=np.float32)) / np.asarray(self._std, dtype=np.float32)
        return self._torch.from_numpy(arr.transpose(2, 0, 1))

    def encode_batch(self, images):
        batch = self._torch.stack([self._prepare(image) for image in images]).to(self._device)
        with self._torch.no_grad():
            out = self._backbone(batch).flatten(1).cpu().numpy()
        return [[float(v) for v in row] for row in out]


def build_encoder(config: BridgeConfig) -> EncoderBase:
    """Instantiate the encoder named by config.model. Raises BridgeError on
    unknown models or failed loads; callers must not have emitted the
    handshake yet."""
    if config.model == "echo":
        return EchoEncoder(config.dim)
    if config.model == "hog":
        return HogEncoder(config.resolution or 64)
    if config.model.startswith("tv:"):
        name = config.model[3:]
        if not name:
            raise BridgeError("tv: model identifier is missing the model name")
        return TorchvisionEncoder(
            name,
            device=config.device,
            resolution=config.resolution or 224,
            mean=config.mean,
            std=config.std,
        )
    raise BridgeError(f"unknown model {config.model!r}; use echo, hog, or tv:<name>")
