"""Input perturbations for robustness sweeps: Gaussian pixel noise, JPEG.

Noise is sampled independently per channel value, rounded to the integer
grid, and clamped to [0, 255]. JPEG goes through a stock baseline codec;
this module does not implement DCT coding.
"""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import ConfigError, PerturbError
from .types import ImageTensor


def add_gaussian_noise(image: ImageTensor, level: float, seed: int) -> ImageTensor:
    """Add N(0, level^2) noise per value, round, clamp to [0, 255]."""
    if not isinstance(image, ImageTensor):
        raise ConfigError("image must be an ImageTensor")
    level = float(level)
    if not (level >= 0.0) or not np.isfinite(level):
        raise ConfigError(f"noise level must be a finite nonnegative real, got {level}")
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if level == 0.0:
        return image
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, level, size=image.data.shape)
    noisy = np.rint(image.data.astype(np.float64) + noise)
    return ImageTensor(np.clip(noisy, 0, 255).astype(np.uint8))


def jpeg_roundtrip(image: ImageTensor, quality: int) -> ImageTensor:
    """Encode to baseline JPEG at ``quality`` and decode back.

    Dimensions are preserved; pixel values change with the codec's loss.
    """
    if not isinstance(image, ImageTensor):
        raise ConfigError("image must be an ImageTensor")
    if not (isinstance(quality, int) and 1 <= quality <= 100):
        raise ConfigError(f"quality must be an integer in [1, 100], got {quality}")
    if image.channels != 3:
        raise ConfigError(f"JPEG round-trip needs a 3-channel image, got {image.channels}")
    try:
        buffer = io.BytesIO()
        Image.fromarray(image.data, mode="RGB").save(buffer, format="JPEG", quality=quality)
        buffer.seek(0)
        decoded = np.asarray(Image.open(buffer).convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise PerturbError(f"JPEG codec failure at quality {quality}: {exc}") from exc
    if decoded.shape != image.data.shape:
        raise PerturbError(
            f"JPEG round-trip changed dimensions {image.data.shape} -> {decoded.shape}"
        )
    return ImageTensor(decoded)
