"""maskprobe: zero-shot backdoor-sample detection for vision encoders.

Progressively mask an input image patch by patch, embed every masked copy,
and cluster the resulting embedding trajectory under the cosine metric with
a radius scaled from the trajectory's own initial local density. Backdoored
inputs hold a tight cluster while their trigger survives and then jump,
splitting the trajectory into multiple clusters; clean inputs drift smoothly
and stay in one.
"""

from .backends import (
    EchoBackend,
    EncoderBackend,
    ExternalProcessBackend,
    FilePlaybackBackend,
    SimulatorBackend,
    echo_embedding,
    encode_batch,
)
from .clustering import ClusterLabels, cluster_count, dbscan
from .density import DensityReport, cosine_distance, local_density, pairwise_cosine_distances
from .detector import detect, detect_from_sequence
from .errors import (
    ConfigError,
    EncoderError,
    FormatError,
    InvalidRadiusError,
    MaskProbeError,
    MissingFieldError,
    PerturbError,
    ZeroVectorError,
)
from .estimator import BackdoorDetector
from .evaluation import (
    Downstream,
    EvalReport,
    PerSampleRow,
    SampleRecord,
    confusion_rates,
    evaluate,
    load_manifest,
    sweep,
    sweep_csv,
    whole_asr_ca,
)
from .images import load_image, save_image
from .masking import MaskTrajectory, derive_seed, make_trajectory, masked_sequence, patch_bounds
from .perturb import add_gaussian_noise, jpeg_roundtrip
from .simulate import KIND_BACKDOOR, KIND_CLEAN, SimProfile, simulate_trajectory
from .trajfile import parse_trajectory, read_trajectory, write_trajectory
from .types import (
    VERDICT_BACKDOOR,
    VERDICT_CLEAN,
    DetectionConfig,
    DetectionResult,
    EmbeddingSequence,
    GridSpec,
    ImageTensor,
    trajectory_steps,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "BackdoorDetector",
    "ClusterLabels",
    "ConfigError",
    "DensityReport",
    "DetectionConfig",
    "DetectionResult",
    "Downstream",
    "EchoBackend",
    "EmbeddingSequence",
    "EncoderBackend",
    "EncoderError",
    "EvalReport",
    "ExternalProcessBackend",
    "FilePlaybackBackend",
    "FormatError",
    "GridSpec",
    "ImageTensor",
    "InvalidRadiusError",
    "KIND_BACKDOOR",
    "KIND_CLEAN",
    "MaskProbeError",
    "MaskTrajectory",
    "MissingFieldError",
    "PerSampleRow",
    "PerturbError",
    "SampleRecord",
    "SimProfile",
    "SimulatorBackend",
    "VERDICT_BACKDOOR",
    "VERDICT_CLEAN",
    "ZeroVectorError",
    "add_gaussian_noise",
    "cluster_count",
    "confusion_rates",
    "cosine_distance",
    "dbscan",
    "derive_seed",
    "detect",
    "detect_from_sequence",
    "echo_embedding",
    "encode_batch",
    "evaluate",
    "jpeg_roundtrip",
    "load_image",
    "load_manifest",
    "local_density",
    "make_trajectory",
    "masked_sequence",
    "pairwise_cosine_distances",
    "parse_trajectory",
    "patch_bounds",
    "read_trajectory",
    "save_image",
    "simulate_trajectory",
    "sweep",
    "sweep_csv",
    "trajectory_steps",
    "validate_config",
    "whole_asr_ca",
    "write_trajectory",
]
