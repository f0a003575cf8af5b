"""Release gate for the detector.

Each test checks one binding property of the pipeline end to end, prints a
single summary line with the measured numbers, and fails if the property or
its runtime bound is violated. Run with `pytest tests/test_acceptance.py -v -s`
to see the per-criterion lines.
"""
import math
import sys
import time

import numpy as np
import pytest

from maskprobe import (
    DetectionConfig,
    EncoderError,
    ExternalProcessBackend,
    GridSpec,
    ImageTensor,
    SimProfile,
    add_gaussian_noise,
    confusion_rates,
    dbscan,
    detect_from_sequence,
    echo_embedding,
    encode_batch,
    jpeg_roundtrip,
    local_density,
    make_trajectory,
    masked_sequence,
    patch_bounds,
    read_trajectory,
    simulate_trajectory,
    write_trajectory,
)
from oracles import canonical_labels, naive_dbscan, naive_density, naive_masked_image

BACKDOOR = "Backdoor"
CLEAN = "Clean"


def _verdicts(kind, seeds, cfg, length=193):
    flagged = 0
    for seed in seeds:
        seq = simulate_trajectory(SimProfile(kind=kind, seed=seed), length)
        if detect_from_sequence(seq, cfg).verdict == BACKDOOR:
            flagged += 1
    return flagged


def test_density_oracle():
    """Per-point and mean local density match a naive double loop to 1e-12
    relative error on 200 random instances, in under a second."""
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 11))
        dim = int(rng.integers(2, 9))
        vectors = rng.normal(size=(k, dim)) * float(rng.uniform(0.1, 10.0))
        report = local_density(vectors, k=k)
        ref_points, ref_mean = naive_density([list(row) for row in vectors])
        for got, want in zip(report.per_point, ref_points):
            assert math.isclose(got, want, rel_tol=1e-12, abs_tol=0.0)
            if want != 0.0:
                worst = max(worst, abs(got - want) / abs(want))
        assert math.isclose(report.p_tilde, ref_mean, rel_tol=1e-12, abs_tol=0.0)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"density oracle took {elapsed:.2f}s, bound is 1s"
    print(f"[PASS] density oracle: 200 instances, worst rel err {worst:.2e}, {elapsed:.2f}s")


def test_dbscan_oracle():
    """Cluster labels match a brute-force reachability-closure oracle up to
    renaming, noise points included, on 200 random instances in under 10 s."""
    rng = np.random.default_rng(43)
    start = time.perf_counter()
    checked = 0
    for _ in range(200):
        n = int(rng.integers(2, 41))
        dim = int(rng.integers(2, 7))
        centers = rng.normal(size=(int(rng.integers(1, 5)), dim))
        spread = float(rng.uniform(0.01, 0.8))
        picks = rng.integers(0, len(centers), size=n)
        vectors = centers[picks] + rng.normal(scale=spread, size=(n, dim))
        vectors[np.linalg.norm(vectors, axis=1) < 1e-9] += 1.0
        radius = float(rng.uniform(0.05, 1.5))
        min_samples = int(rng.integers(1, 7))
        got = canonical_labels(list(dbscan(vectors, radius, min_samples).labels))
        want = canonical_labels(naive_dbscan([list(row) for row in vectors], radius, min_samples))
        assert got == want, f"labels diverge for n={n} radius={radius} min_samples={min_samples}"
        checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"dbscan oracle took {elapsed:.2f}s, bound is 10s"
    print(f"[PASS] dbscan oracle: {checked} instances match up to renaming, {elapsed:.2f}s")


def test_masking_exactness():
    """Fifty random (image size, grid, seed) triples: every step of the masked
    sequence equals a per-pixel reference painter, patch bounds tile the image
    exactly once, and masked pixel sets grow monotonically."""
    rng = np.random.default_rng(44)
    start = time.perf_counter()
    for _ in range(50):
        rows = int(rng.integers(1, 7))
        cols = int(rng.integers(1, 7))
        if rows * cols < 2:  # a 1x1 grid has nothing to mask
            cols = 2
        height = int(rng.integers(rows, 37))
        width = int(rng.integers(cols, 37))
        seed = int(rng.integers(0, 2**64, dtype=np.uint64))
        grid = GridSpec(rows, cols)
        # fill=255 with pixels below 250 makes the masked set unambiguous
        image = ImageTensor(rng.integers(0, 250, size=(height, width, 3)).astype(np.uint8))
        traj = make_trajectory(grid, 0.75, 1, seed)
        seq = masked_sequence(image, traj, fill=255)

        paint = np.zeros((height, width), dtype=int)
        for p in range(rows * cols):
            r0, c0, r1, c1 = patch_bounds(grid, image, p)
            paint[r0:r1, c0:c1] += 1
        assert (paint == 1).all(), "patch bounds must tile the image exactly once"

        prev_masked = np.zeros((height, width), dtype=bool)
        for t, step_img in enumerate(seq):
            ref = naive_masked_image(image.data, rows, cols, list(traj.order), t, traj.stride, fill=255)
            assert np.array_equal(step_img.data, np.asarray(ref, dtype=np.uint8)), (
                f"step {t} diverges from the per-pixel reference")
            masked_now = (step_img.data == 255).all(axis=2)
            assert (prev_masked <= masked_now).all(), "masked set must grow monotonically"
            prev_masked = masked_now
    elapsed = time.perf_counter() - start
    print(f"[PASS] masking exactness: 50 triples, all steps match the reference, {elapsed:.2f}s")


def test_simulator_discrimination():
    """Default profiles at s=50, k=5, length 193 over seeds 0..999 per class:
    TPR at least 0.99 and FPR at most 0.05, single-threaded in under 60 s."""
    cfg = DetectionConfig(scale=50.0, top_k=5)
    start = time.perf_counter()
    tp = _verdicts("backdoor", range(1000), cfg)
    fp = _verdicts("clean", range(1000), cfg)
    elapsed = time.perf_counter() - start
    tpr = tp / 1000
    fpr = fp / 1000
    assert tpr >= 0.99, f"TPR {tpr:.4f} below 0.99"
    assert fpr <= 0.05, f"FPR {fpr:.4f} above 0.05"
    assert elapsed < 60.0, f"discrimination run took {elapsed:.1f}s, bound is 60s"
    print(f"[PASS] simulator discrimination: TPR {tpr:.3f} (>=0.99), FPR {fpr:.3f} (<=0.05), {elapsed:.1f}s")


def test_seed_stability():
    """TPR standard deviation across 10 disjoint simulation seed sets stays
    within 2 percentage points on a 200-sample manifest."""
    cfg = DetectionConfig(scale=50.0)
    rates = []
    for seed_set in range(10):
        base = 100_000 + seed_set * 1000
        tp = _verdicts("backdoor", range(base, base + 100), cfg)
        fp = _verdicts("clean", range(base + 500, base + 600), cfg)
        del fp  # clean half of the manifest runs for parity; TPR is the tracked rate
        rates.append(tp / 100)
    std = float(np.std(rates))
    assert std <= 0.02, f"TPR std {std:.4f} exceeds 2 percentage points"
    print(f"[PASS] seed stability: TPR mean {np.mean(rates):.3f}, std {std * 100:.2f}pp (<=2pp)")


def test_scale_sweep_shape():
    """Sweeping s over {1,2,5,10,20,50,100} on a fixed 100+100 manifest: the
    false-positive count never rises by more than one sample between adjacent
    scales (non-increasing within one sample of monotone), and TPR at s=100
    stays at or above 0.90."""
    scales = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]
    backdoor = [simulate_trajectory(SimProfile(kind="backdoor", seed=s), 193) for s in range(100)]
    clean = [simulate_trajectory(SimProfile(kind="clean", seed=500 + s), 193) for s in range(100)]
    fp_counts = []
    tp_counts = []
    for scale in scales:
        cfg = DetectionConfig(scale=scale)
        fp_counts.append(sum(detect_from_sequence(seq, cfg).verdict == BACKDOOR for seq in clean))
        tp_counts.append(sum(detect_from_sequence(seq, cfg).verdict == BACKDOOR for seq in backdoor))
    for i in range(len(scales) - 1):
        assert fp_counts[i + 1] <= fp_counts[i] + 1, (
            f"FPR rises by more than one sample from s={scales[i]} to s={scales[i + 1]}: {fp_counts}")
    tpr_at_100 = tp_counts[-1] / 100
    assert tpr_at_100 >= 0.90, f"TPR at s=100 is {tpr_at_100:.2f}, needs >= 0.90"
    print(f"[PASS] scale sweep: fp per scale {fp_counts}, TPR@100 {tpr_at_100:.2f} (>=0.90)")


def test_rate_formula():
    """Rate formulas on a fixed confusion matrix: TP=523, FN=109, FP=2138,
    TN=9860 must give TPR 82.75% and FPR 17.82%, both within 0.02 points."""
    tpr, fpr = confusion_rates(523, 109, 2138, 9860)
    assert abs(tpr * 100 - 82.75) <= 0.02, f"TPR {tpr * 100:.4f}% not within 82.75 +/- 0.02"
    assert abs(fpr * 100 - 17.82) <= 0.02, f"FPR {fpr * 100:.4f}% not within 17.82 +/- 0.02"
    print(f"[PASS] rate formula: TPR {tpr * 100:.4f}% (82.75+/-0.02), FPR {fpr * 100:.4f}% (17.82+/-0.02)")


def test_verdict_invariances():
    """Verdicts are unchanged by global positive scaling (exactly, using a
    power-of-two factor) and by global rotation (1e-9 tolerance on the density)
    on 100 random sequences, half per class."""
    cfg = DetectionConfig(scale=50.0)
    rng = np.random.default_rng(45)
    q, _ = np.linalg.qr(rng.normal(size=(512, 512)))
    checked = 0
    for i in range(50):
        for kind in ("backdoor", "clean"):
            seq = simulate_trajectory(SimProfile(kind=kind, seed=7000 + i), 193)
            base = detect_from_sequence(seq, cfg)

            scaled = detect_from_sequence(seq.vectors * 4.0, cfg)
            assert scaled.verdict == base.verdict
            assert scaled.labels == base.labels
            assert scaled.p_tilde == base.p_tilde, "power-of-two scaling must be bit-exact"

            rotated = detect_from_sequence(seq.vectors @ q, cfg)
            assert rotated.verdict == base.verdict
            assert abs(rotated.p_tilde - base.p_tilde) <= 1e-9 * max(1.0, base.p_tilde)
            checked += 1
    print(f"[PASS] verdict invariances: {checked} sequences, scaling exact, rotation within 1e-9")


def test_perturbation_contracts():
    """Noise level 0 is the identity; at level 10 the empirical noise std on
    unclamped mid-gray pixels lands within 2%; JPEG round-trips preserve
    dimensions at qualities 20 through 100."""
    rng = np.random.default_rng(46)
    image = ImageTensor(rng.integers(0, 256, size=(37, 53, 3)).astype(np.uint8))
    assert add_gaussian_noise(image, 0.0, seed=1) is image

    # mid-gray keeps 10-sigma noise away from the clamp at 0/255
    gray = ImageTensor(np.full((1000, 1000, 3), 128, dtype=np.uint8))
    noisy = add_gaussian_noise(gray, 10.0, seed=2)
    std = float((noisy.data.astype(np.float64) - 128.0).std())
    assert abs(std - 10.0) <= 0.2, f"noise std {std:.3f} not within 10 +/- 2%"

    for quality in (20, 40, 60, 80, 100):
        out = jpeg_roundtrip(image, quality)
        assert out.data.shape == image.data.shape, f"JPEG q={quality} changed dimensions"
    print(f"[PASS] perturbation contracts: level-0 identity, std {std:.3f} (10 +/- 0.2), JPEG dims stable")


def test_protocol_and_format_round_trips(tmp_path):
    """Trajectory files survive write-then-read bit for bit, the stdio echo
    server reproduces the in-process hash projection exactly, and a malformed
    protocol line surfaces as EncoderError."""
    seq = simulate_trajectory(SimProfile(kind="backdoor", seed=9), 193)
    path = tmp_path / "roundtrip.bids"
    write_trajectory(seq, path)
    back = read_trajectory(path)
    assert np.array_equal(back.vectors, seq.vectors), "write/read must be an identity"

    rng = np.random.default_rng(47)
    images = [ImageTensor(rng.integers(0, 256, size=(9, 11, 3)).astype(np.uint8)) for _ in range(4)]
    with ExternalProcessBackend([sys.executable, "-m", "maskprobe.echoserver", "--dim", "32"]) as backend:
        got = encode_batch(backend, images)
    for vec, img in zip(got, images):
        assert np.array_equal(vec, echo_embedding(img, dim=32)), "protocol embedding differs from local echo"

    garbage = (
        "import json, sys\n"
        "print(json.dumps({'ready': True, 'dim': 3})); sys.stdout.flush()\n"
        "sys.stdin.readline()\n"
        "print('not a protocol line'); sys.stdout.flush()\n"
    )
    with pytest.raises(EncoderError):
        with ExternalProcessBackend([sys.executable, "-c", garbage]) as backend:
            encode_batch(backend, images[:1])
    print("[PASS] protocol and format: file round-trip exact, stdio echo exact, malformed line raises")
