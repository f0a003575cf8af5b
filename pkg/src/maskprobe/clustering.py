"""From-scratch DBSCAN over embedding trajectories, cosine metric.

Determinism is part of the contract: points are scanned in sequence order,
neighbor expansion proceeds in index order, clusters are numbered 0, 1, 2
in discovery order, and a border point reachable from several clusters keeps
the first one that claims it. Trajectories are short (a few hundred points)
so the full O(n^2) distance matrix is computed up front.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, InvalidRadiusError
from .density import pairwise_cosine_distances
from .types import EmbeddingSequence

NOISE = -1
_UNCLASSIFIED = -2


@dataclass(frozen=True)
class ClusterLabels:
    """One integer label per embedding; -1 marks noise, clusters count from 0."""

    labels: tuple

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ConfigError("labels must be nonempty")
        if any(lab < NOISE for lab in self.labels):
            raise ConfigError("labels must be -1 (noise) or nonnegative cluster ids")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


def dbscan(
    embeddings: Union[EmbeddingSequence, np.ndarray],
    radius: float,
    min_samples: int,
) -> ClusterLabels:
    """DBSCAN under the cosine metric.

    A core point has at least min_samples points (itself included) within
    cosine distance <= radius. Clusters are the density-reachability closures
    of core points; points reachable from no core point are noise (-1).
    """
    radius = float(radius)
    if not (radius > 0.0) or not np.isfinite(radius):
        raise InvalidRadiusError(f"radius must be a positive finite real, got {radius}")
    if not (isinstance(min_samples, int) and min_samples >= 1):
        raise ConfigError(f"min_samples must be a positive integer, got {min_samples}")

    seq = embeddings if isinstance(embeddings, EmbeddingSequence) else EmbeddingSequence(embeddings)
    n = len(seq)
    dist = pairwise_cosine_distances(seq)
    # neighbors[i] ascends in index order, which fixes the expansion order.
    neighbors = [np.flatnonzero(dist[i] <= radius) for i in range(n)]
    core = [len(neighbors[i]) >= min_samples for i in range(n)]

    labels = [_UNCLASSIFIED] * n
    cluster = 0
    for start in range(n):
        if labels[start] != _UNCLASSIFIED:
            continue
        if not core[start]:
            labels[start] = NOISE
            continue
        labels[start] = cluster
        queue = deque(int(j) for j in neighbors[start])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if labels[j] != _UNCLASSIFIED:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(int(m) for m in neighbors[j])
        cluster += 1
    return ClusterLabels(labels=tuple(labels))


def cluster_count(labels: ClusterLabels) -> int:
    """Count of distinct labels, the noise label included as one label."""
    if len(labels.labels) == 0:
        raise ConfigError("labels must be nonempty")
    return len(set(labels.labels))
