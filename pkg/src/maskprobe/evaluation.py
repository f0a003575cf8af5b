"""Manifest-driven evaluation: detection over labeled samples, TPR/FPR,
post-filtering ASR/CA, and parameter or robustness sweeps.

A manifest is a list of SampleRecord values. Sources may be trajectory
files, image files, or in-memory EmbeddingSequence / ImageTensor objects
(programmatic runs). Backdoor is the positive class. Per-sample failures
are recorded on the report and excluded from the confusion counts, never
silently dropped.

Seed discipline: for image sources the masking order uses the per-sample
seed derive_seed(cfg.seed, "mask", id), backends with internal randomness
are reseeded through backend.for_sample(id, cfg.seed), and noise
perturbations use derive_seed(cfg.seed, "noise", id). One global seed
therefore pins an entire evaluation.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

from .backends import EncoderBackend
from .detector import detect, detect_from_sequence
from .errors import ConfigError, MaskProbeError, MissingFieldError
from .images import load_image
from .masking import derive_seed
from .perturb import add_gaussian_noise, jpeg_roundtrip
from .trajfile import MAGIC, read_trajectory
from .types import (
    VERDICT_CLEAN,
    DetectionConfig,
    EmbeddingSequence,
    GridSpec,
    ImageTensor,
)

GT_CLEAN = "clean"
GT_BACKDOOR = "backdoor"

SWEEP_AXES = ("scale", "top_k", "masking_ratio", "grid", "seed", "noise_level", "jpeg_quality")

CSV_HEADER = (
    "axis", "value", "tp", "fn", "fp", "tn",
    "tpr", "fpr", "asr_whole", "ca_whole", "mean_elapsed", "errors",
)


@dataclass(frozen=True)
class Downstream:
    """Downstream classifier outcome for one sample, for ASR/CA accounting."""

    predicted_label: object
    true_label: object
    target_label: object


@dataclass(frozen=True)
class SampleRecord:
    id: str
    source: Union[str, EmbeddingSequence, ImageTensor]
    ground_truth: str
    downstream: Optional[Downstream] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ConfigError("sample id must be a nonempty string")
        if self.ground_truth not in (GT_CLEAN, GT_BACKDOOR):
            raise ConfigError(
                f"ground_truth must be '{GT_CLEAN}' or '{GT_BACKDOOR}', got {self.ground_truth!r}"
            )


@dataclass(frozen=True)
class PerSampleRow:
    id: str
    verdict: str
    p_tilde: float
    cluster_count: int
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "verdict": self.verdict,
            "p_tilde": self.p_tilde,
            "cluster_count": self.cluster_count,
            "elapsed": self.elapsed,
        }


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fn: int
    fp: int
    tn: int
    tpr: Optional[float]
    fpr: Optional[float]
    asr_whole: Optional[float]
    ca_whole: Optional[float]
    per_sample: Tuple[PerSampleRow, ...]
    errors: Tuple[Tuple[str, str], ...]
    config: dict = field(default_factory=dict)

    @property
    def mean_elapsed(self) -> Optional[float]:
        if not self.per_sample:
            return None
        return sum(row.elapsed for row in self.per_sample) / len(self.per_sample)

    def to_dict(self) -> dict:
        out = {
            "counts": {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn},
            "per_sample": [row.to_dict() for row in self.per_sample],
            "errors": [{"id": sid, "message": msg} for sid, msg in self.errors],
            "config": dict(self.config),
        }
        # Undefined rates stay absent rather than masquerading as 0.
        for key, value in (
            ("tpr", self.tpr), ("fpr", self.fpr),
            ("asr_whole", self.asr_whole), ("ca_whole", self.ca_whole),
            ("mean_elapsed", self.mean_elapsed),
        ):
            if value is not None:
                out[key] = value
        return out


def load_manifest(path) -> List[SampleRecord]:
    """Read a manifest JSON array; source paths resolve relative to it."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ConfigError(f"manifest {path} must be a JSON array")
    base = os.path.dirname(os.path.abspath(path))
    records = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ConfigError(f"manifest entry {i} is not an object")
        try:
            sid = entry["id"]
            source = entry["source"]
            ground_truth = entry["ground_truth"]
        except KeyError as exc:
            raise MissingFieldError(f"manifest entry {i} lacks field {exc}") from exc
        downstream = None
        if "downstream" in entry and entry["downstream"] is not None:
            ds = entry["downstream"]
            try:
                downstream = Downstream(
                    predicted_label=ds["predicted_label"],
                    true_label=ds["true_label"],
                    target_label=ds["target_label"],
                )
            except (KeyError, TypeError) as exc:
                raise MissingFieldError(f"manifest entry {i} has bad downstream data: {exc}") from exc
        if not isinstance(source, str):
            raise ConfigError(f"manifest entry {i} source must be a path string")
        if not os.path.isabs(source):
            source = os.path.join(base, source)
        records.append(SampleRecord(id=sid, source=source, ground_truth=ground_truth, downstream=downstream))
    return records


def _resolve_source(source):
    """Classify a record source as ('sequence', seq) or ('image', img)."""
    if isinstance(source, EmbeddingSequence):
        return "sequence", source
    if isinstance(source, ImageTensor):
        return "image", source
    with open(source, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return "sequence", read_trajectory(source)
    return "image", load_image(source)


def _run_sample(
    record: SampleRecord,
    backend: EncoderBackend,
    cfg: DetectionConfig,
    noise_level: Optional[float],
    jpeg_quality: Optional[int],
):
    kind, payload = _resolve_source(record.source)
    if kind == "sequence":
        if noise_level is not None or jpeg_quality is not None:
            raise ConfigError(
                f"sample {record.id}: pixel perturbations require an image source"
            )
        return detect_from_sequence(payload, cfg)
    image = payload
    if noise_level is not None:
        image = add_gaussian_noise(image, noise_level, derive_seed(cfg.seed, "noise", record.id))
    if jpeg_quality is not None:
        image = jpeg_roundtrip(image, jpeg_quality)
    sample_cfg = replace(cfg, seed=derive_seed(cfg.seed, "mask", record.id))
    return detect(image, backend.for_sample(record.id, cfg.seed), sample_cfg)


def confusion_rates(tp: int, fn: int, fp: int, tn: int) -> Tuple[Optional[float], Optional[float]]:
    """True/false positive rates from confusion counts.

    tpr = tp / (tp + fn) over backdoor samples, fpr = fp / (fp + tn) over
    clean samples. A zero denominator yields None for that rate.
    """
    for name, value in (("tp", tp), ("fn", fn), ("fp", fp), ("tn", tn)):
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
            raise ConfigError(f"{name} must be a nonnegative integer, got {value!r}")
    tpr = tp / (tp + fn) if tp + fn > 0 else None
    fpr = fp / (fp + tn) if fp + tn > 0 else None
    return tpr, fpr


def whole_asr_ca(samples: Sequence[Tuple[SampleRecord, str]]) -> Tuple[Optional[float], Optional[float]]:
    """Post-filtering attack success rate and clean accuracy over all samples.

    A sample flagged as backdoor counts as a classification failure for both
    rates. asr_whole divides by the number of backdoor samples, ca_whole by
    the number of clean samples; a zero denominator yields None for that rate.
    """
    backdoor_total = clean_total = asr_hits = ca_hits = 0
    for record, verdict in samples:
        if record.downstream is None:
            raise MissingFieldError(f"sample {record.id} lacks downstream data")
        ds = record.downstream
        if record.ground_truth == GT_BACKDOOR:
            backdoor_total += 1
            if verdict == VERDICT_CLEAN and ds.predicted_label == ds.target_label:
                asr_hits += 1
        else:
            clean_total += 1
            if verdict == VERDICT_CLEAN and ds.predicted_label == ds.true_label:
                ca_hits += 1
    asr = asr_hits / backdoor_total if backdoor_total > 0 else None
    ca = ca_hits / clean_total if clean_total > 0 else None
    return asr, ca


def evaluate(
    manifest: Sequence[SampleRecord],
    backend: EncoderBackend,
    cfg: DetectionConfig,
    noise_level: Optional[float] = None,
    jpeg_quality: Optional[int] = None,
    workers: int = 1,
) -> EvalReport:
    """Detect every manifest sample and assemble the confusion report."""
    if len(manifest) == 0:
        raise ConfigError("manifest must be nonempty")
    ids = [record.id for record in manifest]
    if len(set(ids)) != len(ids):
        raise ConfigError("sample ids must be unique; duplicates would collide derived seeds")
    if not (isinstance(workers, int) and workers >= 1):
        raise ConfigError(f"workers must be a positive integer, got {workers}")

    def run(record):
        try:
            return record, _run_sample(record, backend, cfg, noise_level, jpeg_quality), None
        except (MaskProbeError, OSError) as exc:
            return record, None, f"{type(exc).__name__}: {exc}"

    if workers == 1:
        outcomes = [run(record) for record in manifest]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, manifest))

    tp = fn = fp = tn = 0
    rows = []
    errors = []
    judged = []
    for record, result, error in outcomes:
        if error is not None:
            errors.append((record.id, error))
            continue
        rows.append(PerSampleRow(
            id=record.id,
            verdict=result.verdict,
            p_tilde=result.p_tilde,
            cluster_count=result.cluster_count,
            elapsed=result.elapsed,
        ))
        judged.append((record, result.verdict))
        positive = record.ground_truth == GT_BACKDOOR
        flagged = result.is_backdoor
        if positive and flagged:
            tp += 1
        elif positive:
            fn += 1
        elif flagged:
            fp += 1
        else:
            tn += 1

    asr = ca = None
    if judged and all(record.downstream is not None for record, _ in judged):
        asr, ca = whole_asr_ca(judged)

    config_echo = cfg.to_dict()
    if noise_level is not None:
        config_echo["noise_level"] = noise_level
    if jpeg_quality is not None:
        config_echo["jpeg_quality"] = jpeg_quality

    tpr, fpr = confusion_rates(tp, fn, fp, tn)
    return EvalReport(
        tp=tp, fn=fn, fp=fp, tn=tn,
        tpr=tpr, fpr=fpr,
        asr_whole=asr, ca_whole=ca,
        per_sample=tuple(rows),
        errors=tuple(errors),
        config=config_echo,
    )


def _cfg_for_axis(cfg: DetectionConfig, axis: str, value):
    if axis == "scale":
        return replace(cfg, scale=float(value))
    if axis == "top_k":
        return replace(cfg, top_k=int(value))
    if axis == "masking_ratio":
        return replace(cfg, masking_ratio=float(value))
    if axis == "grid":
        grid = value if isinstance(value, GridSpec) else GridSpec.parse(str(value))
        return replace(cfg, grid=grid)
    if axis == "seed":
        return replace(cfg, seed=int(value))
    return cfg


def sweep(
    manifest: Sequence[SampleRecord],
    backend: EncoderBackend,
    cfg: DetectionConfig,
    axis: str,
    values: Sequence,
    workers: int = 1,
) -> List[EvalReport]:
    """One evaluation per axis value, in the given order."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    if len(values) == 0:
        raise ConfigError("sweep needs at least one value")
    reports = []
    for value in values:
        noise_level = float(value) if axis == "noise_level" else None
        jpeg_quality = int(value) if axis == "jpeg_quality" else None
        point_cfg = _cfg_for_axis(cfg, axis, value)
        reports.append(evaluate(
            manifest, backend, point_cfg,
            noise_level=noise_level, jpeg_quality=jpeg_quality, workers=workers,
        ))
    return reports


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def sweep_csv(reports: Sequence[EvalReport], axis: str, values: Sequence) -> str:
    """Render sweep reports as CSV with the fixed documented header."""
    if len(reports) != len(values):
        raise ConfigError("one report per sweep value required")
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(CSV_HEADER)
    for value, report in zip(values, reports):
        writer.writerow([
            axis,
            _csv_cell(value),
            report.tp, report.fn, report.fp, report.tn,
            _csv_cell(report.tpr), _csv_cell(report.fpr),
            _csv_cell(report.asr_whole), _csv_cell(report.ca_whole),
            _csv_cell(report.mean_elapsed),
            len(report.errors),
        ])
    return buffer.getvalue()
