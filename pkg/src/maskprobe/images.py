"""Image file decoding and encoding (PNG and JPEG) to and from ImageTensor."""
from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError
from .types import ImageTensor


def load_image(path) -> ImageTensor:
    """Decode a PNG or JPEG file. Grayscale stays single-channel; everything
    else is converted to RGB."""
    try:
        with Image.open(path) as img:
            if img.mode == "L":
                array = np.asarray(img, dtype=np.uint8)[:, :, None]
            else:
                array = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise ConfigError(f"cannot decode image {path}: {exc}") from exc
    return ImageTensor(array)


def save_image(image: ImageTensor, path) -> None:
    """Write an ImageTensor as PNG or JPEG, chosen by the file extension."""
    if not isinstance(image, ImageTensor):
        raise ConfigError("image must be an ImageTensor")
    if image.channels == 1:
        pil = Image.fromarray(image.data[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(image.data, mode="RGB")
    try:
        pil.save(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot write image {path}: {exc}") from exc
