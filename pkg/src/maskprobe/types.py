"""Shared domain types: grid, detection config, images, embedding sequences, results.

Everything here is immutable after construction and safe to share across
concurrent detection tasks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ZeroVectorError

_MAX_SEED = 2**64


@dataclass(frozen=True)
class GridSpec:
    """A rows x cols partition of an image into rectangular patches."""

    rows: int = 16
    cols: int = 16

    def __post_init__(self):
        if not (isinstance(self.rows, int) and isinstance(self.cols, int)):
            raise ConfigError("grid rows and cols must be integers")
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if self.rows * self.cols < 2:
            # a trajectory needs at least one maskable patch besides the original
            raise ConfigError("grid must contain at least 2 patches, got 1x1")

    @property
    def patch_count(self) -> int:
        return self.rows * self.cols

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse a 'RxC' string such as '16x16'."""
        parts = text.lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"grid must look like 'RxC', got {text!r}")
        try:
            rows, cols = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigError(f"grid must look like 'RxC', got {text!r}") from None
        return cls(rows, cols)

    def __str__(self) -> str:
        return f"{self.rows}x{self.cols}"


def trajectory_steps(grid: GridSpec, masking_ratio: float, stride: int) -> int:
    """Number of masked images m implied by (grid, ratio, stride).

    The full sequence has m + 1 entries: the original image plus one image
    per masking step, each step covering `stride` additional patches.
    """
    return math.floor(masking_ratio * grid.patch_count / stride)


@dataclass(frozen=True)
class DetectionConfig:
    """Knobs of the detection pipeline.

    scale multiplies the average local density of the leading embeddings to
    produce the clustering radius; 5 suits encoders trained from scratch,
    50 suits large pretrained encoders.
    """

    grid: GridSpec = field(default_factory=GridSpec)
    masking_ratio: float = 0.75
    stride: int = 1
    top_k: int = 5
    scale: float = 5.0
    seed: int = 0
    eps_floor: float = 1e-12

    def __post_init__(self):
        if not isinstance(self.grid, GridSpec):
            raise ConfigError("grid must be a GridSpec")
        if not (0.0 < self.masking_ratio <= 1.0):
            raise ConfigError(f"masking_ratio must be in (0, 1], got {self.masking_ratio}")
        if not (isinstance(self.stride, int) and self.stride >= 1):
            raise ConfigError(f"stride must be a positive integer, got {self.stride}")
        if not (isinstance(self.top_k, int) and self.top_k >= 2):
            raise ConfigError(f"top_k must be an integer >= 2, got {self.top_k}")
        if not (self.scale > 0):
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < _MAX_SEED):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if not (self.eps_floor > 0):
            raise ConfigError(f"eps_floor must be positive, got {self.eps_floor}")
        length = trajectory_steps(self.grid, self.masking_ratio, self.stride) + 1
        if length < self.top_k:
            raise ConfigError(
                f"trajectory length {length} (grid {self.grid}, ratio "
                f"{self.masking_ratio}, stride {self.stride}) is shorter than top_k={self.top_k}"
            )

    @property
    def trajectory_length(self) -> int:
        """Embeddings per trajectory: the original image plus all masked steps."""
        return trajectory_steps(self.grid, self.masking_ratio, self.stride) + 1

    def to_dict(self) -> dict:
        return {
            "grid": str(self.grid),
            "masking_ratio": self.masking_ratio,
            "stride": self.stride,
            "top_k": self.top_k,
            "scale": self.scale,
            "seed": self.seed,
            "eps_floor": self.eps_floor,
        }


def validate_config(cfg: DetectionConfig, image_hint: Optional[tuple] = None) -> DetectionConfig:
    """Check every config invariant; return cfg unchanged when all hold.

    ``image_hint`` is an optional (height, width) pair; when given, the grid
    must fit inside it (every patch at least one pixel). Idempotent: the
    constraints are re-checked, never mutated.

    Raises ConfigError naming the violated constraint.
    """
    if not isinstance(cfg, DetectionConfig):
        raise ConfigError("expected a DetectionConfig")
    # Reconstruct to re-run every constructor constraint.
    revalidated = DetectionConfig(
        grid=cfg.grid,
        masking_ratio=cfg.masking_ratio,
        stride=cfg.stride,
        top_k=cfg.top_k,
        scale=cfg.scale,
        seed=cfg.seed,
        eps_floor=cfg.eps_floor,
    )
    if image_hint is not None:
        height, width = int(image_hint[0]), int(image_hint[1])
        if height < cfg.grid.rows or width < cfg.grid.cols:
            raise ConfigError(
                f"image {height}x{width} is smaller than the {cfg.grid} grid"
            )
    del revalidated
    return cfg


class ImageTensor:
    """An 8-bit image, row-major, 1 (grayscale) or 3 (RGB) channels.

    The pixel array is held read-only; construct a new instance to change it.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ConfigError(f"image data must be HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ConfigError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError(f"image must be at least 1x1, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) or np.issubdtype(arr.dtype, np.floating):
                if arr.min() < 0 or arr.max() > 255:
                    raise ConfigError("pixel values must lie in [0, 255]")
                arr = arr.astype(np.uint8)
            else:
                raise ConfigError(f"unsupported pixel dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ImageTensor is immutable")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def tobytes(self) -> bytes:
        """Row-major pixel bytes, the wire representation."""
        return self.data.tobytes()

    def __eq__(self, other) -> bool:
        return isinstance(other, ImageTensor) and self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"ImageTensor({self.height}x{self.width}x{self.channels})"


class EmbeddingSequence:
    """An ordered list of same-dimension real vectors; index 0 is the unmasked image.

    Vectors are stored as a read-only float64 array. All-zero vectors are
    rejected on ingestion because their cosine distance is undefined.
    """

    __slots__ = ("vectors",)

    def __init__(self, vectors):
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise ConfigError(f"embeddings must be a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ConfigError("embedding sequence must contain at least one vector")
        if arr.shape[1] < 2:
            raise ConfigError(f"embedding dimension must be >= 2, got {arr.shape[1]}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("embeddings must be finite")
        norms = np.linalg.norm(arr, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroVectorError(f"embedding {zero[0]} is the all-zero vector")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    def __setattr__(self, name, value):
        raise AttributeError("EmbeddingSequence is immutable")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, index) -> np.ndarray:
        return self.vectors[index]

    def head(self, k: int) -> np.ndarray:
        """The first k vectors, the positional top-k of the masking sequence."""
        return self.vectors[:k]

    def __repr__(self) -> str:
        return f"EmbeddingSequence(n={len(self)}, dim={self.dim})"


VERDICT_BACKDOOR = "Backdoor"
VERDICT_CLEAN = "Clean"


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of one detection: verdict plus the quantities behind it."""

    verdict: str
    labels: tuple
    p_tilde: float
    radius: float
    cluster_count: int
    elapsed: float
    warnings: tuple = ()

    def __post_init__(self):
        expected = VERDICT_BACKDOOR if self.cluster_count > 1 else VERDICT_CLEAN
        if self.verdict != expected:
            raise ConfigError(
                f"verdict {self.verdict!r} inconsistent with cluster_count={self.cluster_count}"
            )
        if self.radius < 0 or self.p_tilde < 0:
            raise ConfigError("p_tilde and radius must be nonnegative")

    @property
    def is_backdoor(self) -> bool:
        return self.verdict == VERDICT_BACKDOOR

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "cluster_count": self.cluster_count,
            "p_tilde": self.p_tilde,
            "radius": self.radius,
            "labels": list(self.labels),
            "elapsed": self.elapsed,
            "warnings": list(self.warnings),
        }
