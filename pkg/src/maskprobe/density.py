"""Pairwise cosine distances and the top-k average local density.

The local density of point i is its mean cosine distance to the other k-1
points among the first k trajectory embeddings; the average of those k values
is the density estimate that sets the clustering radius. All accumulation is
double precision: the estimate can sit near 1e-6 for hijacked trajectories
and single-precision sums would wash it out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, ZeroVectorError
from .types import EmbeddingSequence


def cosine_distance(a, b) -> float:
    """Cosine distance 1 - <a,b>/(|a||b|), in [0, 2].

    Raises ZeroVectorError if either vector has zero norm and ConfigError on
    a dimension mismatch.
    """
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.shape != bv.shape:
        raise ConfigError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine distance is undefined for a zero vector")
    # Clamp the similarity against rounding spill outside [-1, 1].
    sim = min(1.0, max(-1.0, float(np.dot(av, bv)) / (na * nb)))
    return 1.0 - sim


def pairwise_cosine_distances(vectors: Union[EmbeddingSequence, np.ndarray]) -> np.ndarray:
    """Full n x n cosine distance matrix in float64, zero diagonal."""
    seq = vectors if isinstance(vectors, EmbeddingSequence) else EmbeddingSequence(vectors)
    v = np.asarray(seq.vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    unit = v / norms[:, None]
    sims = np.clip(unit @ unit.T, -1.0, 1.0)
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass(frozen=True)
class DensityReport:
    """Per-point local densities P_i over the first k embeddings, and their mean."""

    per_point: tuple
    p_tilde: float
    k: int

    def __post_init__(self):
        if self.k != len(self.per_point):
            raise ConfigError("k must equal the number of per-point densities")
        if not all(0.0 <= p <= 2.0 for p in self.per_point):
            raise ConfigError("per-point densities must lie in [0, 2]")


def local_density(
    embeddings: Union[EmbeddingSequence, np.ndarray],
    k: Optional[int] = None,
) -> DensityReport:
    """Local density of each of the first k embeddings, and their average.

    P_i = (1/(k-1)) * sum over j != i of d(e_i, e_j); p_tilde = mean(P_i).
    k defaults to the full input length. Selection is positional: the first
    k rows, not any nearest-neighbor subset.
    """
    seq = embeddings if isinstance(embeddings, EmbeddingSequence) else EmbeddingSequence(embeddings)
    if k is None:
        k = len(seq)
    if not (isinstance(k, int) and 2 <= k <= len(seq)):
        raise ConfigError(f"k must be an integer in [2, {len(seq)}], got {k}")
    dist = pairwise_cosine_distances(seq.head(k))
    per_point = tuple(float(p) for p in dist.sum(axis=1) / (k - 1))
    # p_tilde is the mean of the reported per-point values themselves,
    # exactly rounded, so the report is internally consistent.
    p_tilde = math.fsum(per_point) / k
    return DensityReport(per_point=per_point, p_tilde=p_tilde, k=k)
