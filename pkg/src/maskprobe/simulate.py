"""Synthetic embedding-trajectory simulator.

Generates unit-norm trajectories directly in embedding space. A clean
trajectory is a smooth random walk on the sphere. A backdoor trajectory
starts as a tight cluster around a trigger anchor (the hijacked phase),
jumps to a distant benign anchor once masking would have destroyed the
trigger, then walks on like a clean one.

Noise scales are root-mean-square step lengths: a step is
sigma * g / sqrt(dim) with g standard Gaussian, so the expected step length
is sigma regardless of the embedding dimension. At the defaults this puts
the hijacked within-cluster spread around sigma_hijack^2 in cosine distance,
orders of magnitude under the jump, which is what makes the two classes
separable at high radius scales.

Output vectors are rounded through 32-bit floats so a trajectory written to
disk and read back is bit-identical to the generated one. The rounding moves
norms off 1.0 by at most a few 1e-8.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .errors import ConfigError
from .types import EmbeddingSequence

KIND_CLEAN = "clean"
KIND_BACKDOOR = "backdoor"


@dataclass(frozen=True)
class SimProfile:
    """Parameters of one simulated trajectory draw."""

    kind: str
    dim: int = 512
    sigma_clean: float = 0.05
    sigma_hijack: float = 0.005
    jump_cos: float = 0.5
    t_star_range: Tuple[float, float] = (0.3, 0.6)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (KIND_CLEAN, KIND_BACKDOOR):
            raise ConfigError(f"kind must be '{KIND_CLEAN}' or '{KIND_BACKDOOR}', got {self.kind!r}")
        if not (isinstance(self.dim, int) and self.dim >= 2):
            raise ConfigError(f"dim must be an integer >= 2, got {self.dim}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.kind == KIND_CLEAN:
            # A zero-drift clean profile is legal: it produces a constant
            # trajectory, the degenerate case the detector must call Clean.
            if not (self.sigma_clean >= 0.0):
                raise ConfigError(f"sigma_clean must be >= 0, got {self.sigma_clean}")
            return
        if not (0.0 < self.sigma_hijack < self.sigma_clean):
            raise ConfigError(
                f"need 0 < sigma_hijack < sigma_clean, got {self.sigma_hijack} vs {self.sigma_clean}"
            )
        if not (0.0 < self.jump_cos <= 2.0):
            raise ConfigError(f"jump_cos must be in (0, 2], got {self.jump_cos}")
        lo, hi = self.t_star_range
        if not (0.0 < lo <= hi < 1.0):
            raise ConfigError(f"t_star_range must satisfy 0 < lo <= hi < 1, got {self.t_star_range}")

    def reseeded(self, seed: int) -> "SimProfile":
        return replace(self, seed=seed)


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ConfigError("degenerate zero vector during simulation")
    return v / n


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    return _unit(rng.standard_normal(dim))


def _quantize(vectors: np.ndarray) -> EmbeddingSequence:
    # Round through float32 so the on-disk format reproduces us exactly.
    return EmbeddingSequence(vectors.astype(np.float32).astype(np.float64))


def simulate_trajectory(profile: SimProfile, length: int) -> EmbeddingSequence:
    """One trajectory of ``length`` unit vectors, deterministic per seed.

    Clean: e_{t+1} = normalize(e_t + sigma_clean * g_t / sqrt(dim)).
    Backdoor: e_t = normalize(b + sigma_hijack * g_t / sqrt(dim)) while the
    trigger holds, one jump to an anchor at cosine distance >= jump_cos from
    b at step t* = floor(frac * length) with frac drawn from t_star_range,
    then a clean-style walk from the new anchor.
    """
    if not (isinstance(length, int) and length >= 2):
        raise ConfigError(f"length must be an integer >= 2, got {length}")
    rng = np.random.default_rng(profile.seed)
    dim = profile.dim
    scale = 1.0 / math.sqrt(dim)
    out = np.empty((length, dim), dtype=np.float64)

    if profile.kind == KIND_CLEAN:
        point = _random_unit(rng, dim)
        out[0] = point
        for t in range(1, length):
            point = _unit(point + profile.sigma_clean * scale * rng.standard_normal(dim))
            out[t] = point
        return _quantize(out)

    anchor = _random_unit(rng, dim)
    frac = float(rng.uniform(profile.t_star_range[0], profile.t_star_range[1]))
    t_star = min(max(int(frac * length), 1), length - 1)
    # Jump size: at least jump_cos, at most min(jump_cos + 0.5, 2).
    jump = profile.jump_cos + float(rng.uniform(0.0, min(0.5, 2.0 - profile.jump_cos)))
    # Benign anchor at exactly that cosine distance from the trigger anchor.
    raw = rng.standard_normal(dim)
    ortho = _unit(raw - float(np.dot(raw, anchor)) * anchor)
    cos_theta = 1.0 - jump
    sin_theta = math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    benign = _unit(cos_theta * anchor + sin_theta * ortho)

    for t in range(t_star):
        out[t] = _unit(anchor + profile.sigma_hijack * scale * rng.standard_normal(dim))
    out[t_star] = benign
    point = benign
    for t in range(t_star + 1, length):
        point = _unit(point + profile.sigma_clean * scale * rng.standard_normal(dim))
        out[t] = point
    return _quantize(out)
