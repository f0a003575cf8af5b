"""End-to-end detection: mask, encode, density, cluster, verdict.

The verdict rule is literal: an input is flagged as a backdoor sample
exactly when the trajectory's cluster-label set has more than one distinct
value, the noise label included. One deliberate consequence: an all-noise
labeling (every point -1, a single distinct value) reads as Clean; that
case never arises at working radii, and it is surfaced through the result's
warnings so it cannot pass silently.
"""
from __future__ import annotations

import time
from typing import Union

import numpy as np

from .backends import EncoderBackend, encode_batch
from .clustering import NOISE, cluster_count, dbscan
from .density import local_density
from .errors import ConfigError
from .masking import make_trajectory, masked_sequence
from .types import (
    VERDICT_BACKDOOR,
    VERDICT_CLEAN,
    DetectionConfig,
    DetectionResult,
    EmbeddingSequence,
    ImageTensor,
    validate_config,
)


def _analyze(seq: EmbeddingSequence, cfg: DetectionConfig):
    if len(seq) < cfg.top_k:
        raise ConfigError(
            f"sequence has {len(seq)} embeddings, need at least top_k = {cfg.top_k}"
        )
    report = local_density(seq, k=cfg.top_k)
    radius = max(report.p_tilde * cfg.scale, cfg.eps_floor)
    labels = dbscan(seq, radius, cfg.top_k)
    count = cluster_count(labels)
    verdict = VERDICT_BACKDOOR if count > 1 else VERDICT_CLEAN
    warnings = ()
    if all(label == NOISE for label in labels):
        warnings = (
            "all points are noise at this radius; the literal cluster-count rule reads this as Clean",
        )
    return verdict, labels, report.p_tilde, radius, count, warnings


def detect_from_sequence(seq: Union[EmbeddingSequence, np.ndarray], cfg: DetectionConfig) -> DetectionResult:
    """Run density, clustering, and the verdict on a precomputed trajectory."""
    validate_config(cfg)
    if not isinstance(seq, EmbeddingSequence):
        seq = EmbeddingSequence(seq)
    start = time.perf_counter()
    verdict, labels, p_tilde, radius, count, warnings = _analyze(seq, cfg)
    elapsed = time.perf_counter() - start
    return DetectionResult(
        verdict=verdict,
        labels=tuple(labels),
        p_tilde=p_tilde,
        radius=radius,
        cluster_count=count,
        elapsed=elapsed,
        warnings=warnings,
    )


def detect(image: ImageTensor, encoder: EncoderBackend, cfg: DetectionConfig) -> DetectionResult:
    """Full pipeline on one image: mask, encode the batch, analyze.

    Equals detect_from_sequence on the encoded masked sequence, bit for bit,
    apart from the timing field; elapsed here covers masking through verdict.
    """
    if not isinstance(image, ImageTensor):
        raise ConfigError("image must be an ImageTensor")
    validate_config(cfg, image_hint=(image.height, image.width))
    start = time.perf_counter()
    traj = make_trajectory(cfg.grid, cfg.masking_ratio, cfg.stride, cfg.seed)
    images = masked_sequence(image, traj)
    vectors = encode_batch(encoder, images)
    seq = EmbeddingSequence(np.stack(vectors))
    verdict, labels, p_tilde, radius, count, warnings = _analyze(seq, cfg)
    elapsed = time.perf_counter() - start
    return DetectionResult(
        verdict=verdict,
        labels=tuple(labels),
        p_tilde=p_tilde,
        radius=radius,
        cluster_count=count,
        elapsed=elapsed,
        warnings=warnings,
    )
