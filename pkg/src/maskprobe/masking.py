"""Grid partitioning and the progressive masked-image sequence.

The masking order is a Fisher-Yates shuffle of the patch indices driven by
numpy's PCG64 generator, so a (grid, ratio, stride, seed) quadruple pins the
whole sequence bit-for-bit. Sample-scoped seeds are derived from a global
seed and a sample id with SHA-256 (see derive_seed), which keeps seed sweeps
reproducible without correlating samples.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError
from .types import GridSpec, ImageTensor, trajectory_steps


def derive_seed(global_seed: int, *parts: Union[str, int]) -> int:
    """Derive a 64-bit sub-seed from a global seed and context parts.

    SHA-256 over the global seed (8 bytes little-endian) followed by each
    part rendered as UTF-8 text separated by NUL bytes; the first 8 digest
    bytes, little-endian, form the sub-seed.
    """
    h = hashlib.sha256()
    h.update(int(global_seed).to_bytes(8, "little"))
    for part in parts:
        h.update(b"\x00")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


@dataclass(frozen=True)
class MaskTrajectory:
    """A seeded patch order plus how much of it a detection run consumes."""

    order: tuple
    grid: GridSpec
    steps: int
    stride: int

    def __post_init__(self):
        n = self.grid.patch_count
        if sorted(self.order) != list(range(n)):
            raise ConfigError("order must be a permutation of all patch indices")
        if self.steps * self.stride > n:
            raise ConfigError(
                f"steps x stride = {self.steps * self.stride} exceeds {n} patches"
            )

    @property
    def length(self) -> int:
        """Images in the masked sequence, the original included."""
        return self.steps + 1


def _fisher_yates(n: int, seed: int) -> list:
    """Permutation of range(n): Fisher-Yates from the back, PCG64 draws."""
    rng = np.random.Generator(np.random.PCG64(seed))
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return order


def make_trajectory(grid: GridSpec, ratio: float, stride: int, seed: int) -> MaskTrajectory:
    """Build the seeded random masking order for one image.

    steps = floor(ratio * rows * cols / stride); the same seed always yields
    the same order.
    """
    if not isinstance(grid, GridSpec):
        raise ConfigError("grid must be a GridSpec")
    if not (0.0 < ratio <= 1.0):
        raise ConfigError(f"masking ratio must be in (0, 1], got {ratio}")
    if not (isinstance(stride, int) and stride >= 1):
        raise ConfigError(f"stride must be a positive integer, got {stride}")
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    steps = trajectory_steps(grid, ratio, stride)
    order = _fisher_yates(grid.patch_count, seed)
    return MaskTrajectory(order=tuple(order), grid=grid, steps=steps, stride=stride)


def patch_bounds(grid: GridSpec, image: ImageTensor, patch_index: int) -> Tuple[int, int, int, int]:
    """Pixel rectangle (row0, col0, row1, col1), half-open, of one grid patch.

    Interior patches are floor(H/rows) x floor(W/cols); the last row and
    column absorb any remainder, so the rectangles tile the image exactly.
    """
    rows, cols = grid.rows, grid.cols
    if not (0 <= patch_index < rows * cols):
        raise IndexError(f"patch index {patch_index} out of range for {grid}")
    height, width = image.height, image.width
    if height < rows or width < cols:
        raise ConfigError(f"image {height}x{width} is smaller than the {grid} grid")
    ph, pw = height // rows, width // cols
    r, c = divmod(patch_index, cols)
    row0 = r * ph
    col0 = c * pw
    row1 = height if r == rows - 1 else row0 + ph
    col1 = width if c == cols - 1 else col0 + pw
    return row0, col0, row1, col1


def masked_sequence(
    image: ImageTensor,
    traj: MaskTrajectory,
    fill: Union[int, Sequence[int]] = 0,
) -> list:
    """The progressive sequence [x0, x1, ..., xm] of cumulatively masked images.

    Element 0 is the input unchanged; element t has the first t * stride
    patches of traj.order filled with the mask value. ``fill`` is a constant
    per-channel value (scalar or one value per channel).
    """
    if image.height < traj.grid.rows or image.width < traj.grid.cols:
        raise ConfigError(
            f"image {image.height}x{image.width} is smaller than the {traj.grid} grid"
        )
    fill_arr = np.asarray(fill, dtype=np.uint8).reshape(-1)
    if fill_arr.size not in (1, image.channels):
        raise ConfigError(
            f"fill must be scalar or one value per channel, got {fill_arr.size}"
        )

    sequence = [image]
    current = image.data.copy()
    for step in range(1, traj.steps + 1):
        for patch_index in traj.order[(step - 1) * traj.stride : step * traj.stride]:
            row0, col0, row1, col1 = patch_bounds(traj.grid, image, patch_index)
            current[row0:row1, col0:col1, :] = fill_arr
        sequence.append(ImageTensor(current))
    return sequence
