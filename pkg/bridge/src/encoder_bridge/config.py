"""Bridge configuration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple


class BridgeError(Exception):
    """Fatal bridge failure: bad configuration or an encoder that cannot load."""


@dataclass(frozen=True)
class BridgeConfig:
    """Settings for one bridge process.

    model selects the encoder: "echo" (hash projection, no preprocessing),
    "hog" (gradient-histogram features), or "tv:<name>" (a torchvision
    backbone). Preprocessing parameters apply to model-backed encoders only;
    echo hashes the raw request pixels so that independent implementations
    can be compared byte for byte.
    """

    model: str = "echo"
    device: str = "cpu"
    batch_size: int = 8
    mean: Optional[Tuple[float, ...]] = None
    std: Optional[Tuple[float, ...]] = None
    resolution: Optional[int] = None
    dim: int = 64

    def __post_init__(self):
        if not (isinstance(self.model, str) and self.model):
            raise BridgeError(f"model must be a nonempty string, got {self.model!r}")
        if not (isinstance(self.device, str) and self.device):
            raise BridgeError(f"device must be a nonempty string, got {self.device!r}")
        if not (isinstance(self.batch_size, int) and not isinstance(self.batch_size, bool)
                and self.batch_size >= 1):
            raise BridgeError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not (isinstance(self.dim, int) and not isinstance(self.dim, bool) and self.dim >= 2):
            raise BridgeError(f"dim must be an integer >= 2, got {self.dim!r}")
        if self.resolution is not None:
            if not (isinstance(self.resolution, int) and not isinstance(self.resolution, bool)
                    and self.resolution >= 8):
                raise BridgeError(f"resolution must be an integer >= 8, got {self.resolution!r}")
        for name, tup in (("mean", self.mean), ("std", self.std)):
            if tup is None:
                continue
            if not (isinstance(tup, tuple) and tup
                    and all(isinstance(v, float) and v == v for v in tup)):
                raise BridgeError(f"{name} must be a nonempty tuple of finite floats, got {tup!r}")
        if self.std is not None and any(v <= 0 for v in self.std):
            raise BridgeError(f"std values must be positive, got {self.std!r}")
        if (self.mean is None) != (self.std is None):
            raise BridgeError("mean and std must be given together")
        if self.mean is not None and len(self.mean) != len(self.std):
            raise BridgeError("mean and std must have the same number of channels")
