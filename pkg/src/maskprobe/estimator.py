"""Estimator-style wrapper around the detection pipeline.

BackdoorDetector follows the scikit-learn outlier-detector conventions:
constructor parameters are stored verbatim, fit validates them (detection
is zero-shot, so there is nothing to learn), and predict returns +1 for
clean samples and -1 for flagged ones. Inputs may be precomputed embedding
trajectories, or raw images when an encoder backend is supplied.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin

from .backends import EncoderBackend
from .detector import detect, detect_from_sequence
from .errors import ConfigError
from .types import DetectionConfig, EmbeddingSequence, GridSpec, ImageTensor, validate_config


class BackdoorDetector(OutlierMixin, BaseEstimator):
    """Zero-shot backdoor-sample detector with a scikit-learn face.

    Parameters mirror DetectionConfig; ``grid`` accepts "RxC" strings.
    ``encoder`` is an EncoderBackend used when inputs are images rather
    than trajectories.
    """

    def __init__(
        self,
        grid: Union[str, GridSpec] = "16x16",
        masking_ratio: float = 0.75,
        stride: int = 1,
        top_k: int = 5,
        scale: float = 5.0,
        seed: int = 0,
        eps_floor: float = 1e-12,
        encoder: Optional[EncoderBackend] = None,
    ):
        self.grid = grid
        self.masking_ratio = masking_ratio
        self.stride = stride
        self.top_k = top_k
        self.scale = scale
        self.seed = seed
        self.eps_floor = eps_floor
        self.encoder = encoder

    def _config(self) -> DetectionConfig:
        grid = GridSpec.parse(self.grid) if isinstance(self.grid, str) else self.grid
        return DetectionConfig(
            grid=grid,
            masking_ratio=self.masking_ratio,
            stride=self.stride,
            top_k=self.top_k,
            scale=self.scale,
            seed=self.seed,
            eps_floor=self.eps_floor,
        )

    def fit(self, X=None, y=None):
        """Validate the configuration; the detector learns nothing from data."""
        del X, y
        self.config_ = validate_config(self._config())
        return self

    def _check_fitted(self):
        if not hasattr(self, "config_"):
            raise ConfigError("this BackdoorDetector instance is not fitted yet; call fit first")

    def detect_results(self, X: Sequence) -> list:
        """Full DetectionResult per input.

        Each input may be an EmbeddingSequence, a 2-D float array (one
        trajectory), an ImageTensor, or a uint8 HxWxC array. Image inputs
        require the ``encoder`` parameter.
        """
        self._check_fitted()
        if isinstance(X, np.ndarray) and X.ndim == 3 and X.dtype != np.uint8:
            X = list(X)
        results = []
        for item in X:
            if isinstance(item, EmbeddingSequence):
                results.append(detect_from_sequence(item, self.config_))
            elif isinstance(item, ImageTensor) or (
                isinstance(item, np.ndarray) and item.dtype == np.uint8
            ):
                if self.encoder is None:
                    raise ConfigError("image inputs need the encoder parameter")
                image = item if isinstance(item, ImageTensor) else ImageTensor(item)
                results.append(detect(image, self.encoder, self.config_))
            elif isinstance(item, np.ndarray) and item.ndim == 2:
                results.append(detect_from_sequence(EmbeddingSequence(item), self.config_))
            else:
                raise ConfigError(
                    f"cannot interpret input of type {type(item).__name__} as trajectory or image"
                )
        return results

    def predict(self, X: Sequence) -> np.ndarray:
        """+1 for clean, -1 for flagged, per the outlier-detector convention."""
        return np.array(
            [-1 if result.is_backdoor else 1 for result in self.detect_results(X)], dtype=int
        )
