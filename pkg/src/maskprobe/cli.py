"""Command-line surface: detect, eval, simulate, perturb.

Exit codes: 0 success, 1 detection-pipeline error, 2 usage error. Defaults
reproduce the working configuration (16x16 grid, masking ratio 0.75,
stride 1, k=5, scale 5).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .backends import (
    EncoderBackend,
    ExternalProcessBackend,
    FilePlaybackBackend,
    SimulatorBackend,
)
from .detector import detect, detect_from_sequence
from .errors import EncoderError, MaskProbeError
from .evaluation import evaluate, load_manifest, sweep, sweep_csv
from .images import load_image, save_image
from .masking import derive_seed
from .perturb import add_gaussian_noise, jpeg_roundtrip
from .simulate import KIND_BACKDOOR, KIND_CLEAN, SimProfile, simulate_trajectory
from .trajfile import MAGIC, read_trajectory, write_trajectory
from .types import DetectionConfig, GridSpec


class _NoEncoder(EncoderBackend):
    def _encode(self, images):
        raise EncoderError("no encoder configured; pass --encoder")


def _add_detection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scale", type=float, default=5.0, help="radius scaling factor s (default 5)")
    parser.add_argument("--topk", type=int, default=5, help="top-k embeddings for the density estimate (default 5)")
    parser.add_argument("--grid", default="16x16", help="patch grid RxC (default 16x16)")
    parser.add_argument("--ratio", type=float, default=0.75, help="masking ratio (default 0.75)")
    parser.add_argument("--stride", type=int, default=1, help="patches masked per step (default 1)")
    parser.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="global seed (default 0)")
    parser.add_argument("--eps-floor", type=float, default=1e-12, help="radius floor (default 1e-12)")
    parser.add_argument("--encoder", default=None,
                        help="encoder backend: sim:clean | sim:backdoor | exec:\"cmd\" | playback:file")
    parser.add_argument("--dim", type=int, default=512, help="simulator embedding dimension (default 512)")


def _config_from_args(args) -> DetectionConfig:
    return DetectionConfig(
        grid=GridSpec.parse(args.grid),
        masking_ratio=args.ratio,
        stride=args.stride,
        top_k=args.topk,
        scale=args.scale,
        seed=args.seed,
        eps_floor=args.eps_floor,
    )


def _backend_from_args(args, parser: argparse.ArgumentParser) -> EncoderBackend:
    spec = args.encoder
    if spec is None:
        return _NoEncoder()
    if spec in ("sim:clean", "sim:backdoor"):
        kind = KIND_CLEAN if spec.endswith("clean") else KIND_BACKDOOR
        return SimulatorBackend(SimProfile(kind=kind, dim=args.dim, seed=args.seed))
    if spec.startswith("exec:"):
        command = spec[len("exec:"):]
        if not command.strip():
            parser.error("exec: encoder needs a command")
        return ExternalProcessBackend(command)
    if spec.startswith("playback:"):
        path = spec[len("playback:"):]
        if not path:
            parser.error("playback: encoder needs a file path")
        return FilePlaybackBackend(path)
    parser.error(f"unknown encoder spec {spec!r}")


def _is_trajectory_file(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(MAGIC)) == MAGIC


def _cmd_detect(args, parser) -> int:
    cfg = _config_from_args(args)
    if _is_trajectory_file(args.input):
        result = detect_from_sequence(read_trajectory(args.input), cfg)
    else:
        if args.encoder is None:
            parser.error("image input needs --encoder")
        backend = _backend_from_args(args, parser)
        with backend:
            result = detect(load_image(args.input), backend, cfg)
    if args.json:
        print(json.dumps(result.to_dict()))
    else:
        print(
            f"{result.verdict} (clusters={result.cluster_count}, "
            f"p_tilde={result.p_tilde:.6g}, radius={result.radius:.6g}, "
            f"{result.elapsed:.3f}s)"
        )
        for warning in result.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    return 0


def _parse_sweep(text: str, parser) -> tuple:
    if "=" not in text:
        parser.error("--sweep must look like axis=v1,v2,...")
    axis, _, raw = text.partition("=")
    values = [v for v in raw.split(",") if v]
    if not values:
        parser.error("--sweep needs at least one value")
    return axis.strip(), values


def _cmd_eval(args, parser) -> int:
    cfg = _config_from_args(args)
    manifest = load_manifest(args.manifest)
    backend = _backend_from_args(args, parser)
    with backend:
        if args.sweep:
            axis, values = _parse_sweep(args.sweep, parser)
            reports = sweep(manifest, backend, cfg, axis, values, workers=args.workers)
            payload = {
                "axis": axis,
                "points": [
                    {"value": value, "report": report.to_dict()}
                    for value, report in zip(values, reports)
                ],
            }
            csv_text = sweep_csv(reports, axis, values)
        else:
            report = evaluate(
                manifest, backend, cfg,
                noise_level=args.noise, jpeg_quality=args.jpeg, workers=args.workers,
            )
            payload = report.to_dict()
            csv_text = sweep_csv([report], "none", [""])
            reports = [report]

    for report in reports:
        summary = [f"tp={report.tp}", f"fn={report.fn}", f"fp={report.fp}", f"tn={report.tn}"]
        if report.tpr is not None:
            summary.append(f"tpr={report.tpr:.4f}")
        if report.fpr is not None:
            summary.append(f"fpr={report.fpr:.4f}")
        if report.errors:
            summary.append(f"errors={len(report.errors)}")
        print(" ".join(summary))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text)
    if all(len(report.per_sample) == 0 for report in reports):
        print("error: every sample failed", file=sys.stderr)
        return 1
    return 0


def _cmd_simulate(args, parser) -> int:
    if args.count < 1:
        parser.error("--count must be >= 1")
    os.makedirs(args.out_dir, exist_ok=True)
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    entries = []
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            entries = json.load(fh)

    new_ids = {f"{args.kind}-{i:04d}" for i in range(args.count)}
    # Re-running into the same directory replaces matching ids, so a mixed
    # manifest can be built with one clean and one backdoor invocation.
    entries = [e for e in entries if e.get("id") not in new_ids]
    for i in range(args.count):
        sample_id = f"{args.kind}-{i:04d}"
        profile = SimProfile(
            kind=args.kind, dim=args.dim, seed=derive_seed(args.seed, "sim", sample_id)
        )
        seq = simulate_trajectory(profile, args.length)
        filename = f"{args.kind}_{i:04d}.bids"
        write_trajectory(seq, os.path.join(args.out_dir, filename))
        entries.append({"id": sample_id, "source": filename, "ground_truth": args.kind})

    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.count} {args.kind} trajectories and {manifest_path}")
    return 0


def _cmd_perturb(args, parser) -> int:
    image = load_image(args.input)
    if args.noise is not None:
        image = add_gaussian_noise(image, args.noise, args.seed)
    else:
        image = jpeg_roundtrip(image, args.jpeg)
    save_image(image, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskprobe",
        description="Zero-shot backdoor-sample detection via progressive masking trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="classify one image or stored trajectory")
    p_detect.add_argument("--input", required=True, help="image file or trajectory file")
    _add_detection_flags(p_detect)
    p_detect.add_argument("--json", action="store_true", help="print the result as JSON")

    p_eval = sub.add_parser("eval", help="evaluate a labeled manifest")
    p_eval.add_argument("--manifest", required=True, help="manifest JSON file")
    _add_detection_flags(p_eval)
    p_eval.add_argument("--sweep", default=None, help="axis=v1,v2,... parameter sweep")
    p_eval.add_argument("--noise", type=float, default=None, help="Gaussian noise level on image sources")
    p_eval.add_argument("--jpeg", type=int, default=None, help="JPEG quality on image sources")
    p_eval.add_argument("--workers", type=int, default=1, help="concurrent samples (default 1)")
    p_eval.add_argument("--out", default=None, help="write the JSON report here")
    p_eval.add_argument("--csv", default=None, help="write the CSV summary here")

    p_sim = sub.add_parser("simulate", help="write synthetic trajectory files and a manifest")
    p_sim.add_argument("--kind", choices=[KIND_CLEAN, KIND_BACKDOOR], required=True)
    p_sim.add_argument("--count", type=int, required=True, help="number of trajectories")
    p_sim.add_argument("--length", type=int, default=193, help="trajectory length (default 193)")
    p_sim.add_argument("--dim", type=int, default=512, help="embedding dimension (default 512)")
    p_sim.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="global seed (default 0)")
    p_sim.add_argument("--out-dir", required=True, help="output directory")

    p_pert = sub.add_parser("perturb", help="apply a pixel perturbation to an image")
    p_pert.add_argument("--input", required=True, help="input image")
    group = p_pert.add_mutually_exclusive_group(required=True)
    group.add_argument("--noise", type=float, default=None, help="Gaussian noise level")
    group.add_argument("--jpeg", type=int, default=None, help="JPEG quality in [1,100]")
    p_pert.add_argument("--seed", type=lambda s: int(s, 0), default=0, help="noise seed (default 0)")
    p_pert.add_argument("--out", required=True, help="output image path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "detect": _cmd_detect,
        "eval": _cmd_eval,
        "simulate": _cmd_simulate,
        "perturb": _cmd_perturb,
    }
    try:
        return handlers[args.command](args, parser)
    except MaskProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
