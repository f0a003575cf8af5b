import sys

import numpy as np
import pytest

from maskprobe import (
    EchoBackend,
    EncoderError,
    ExternalProcessBackend,
    FilePlaybackBackend,
    ImageTensor,
    SimProfile,
    SimulatorBackend,
    derive_seed,
    echo_embedding,
    encode_batch,
    simulate_trajectory,
    write_trajectory,
)


def _image(seed=0, h=8, w=8, c=3):
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.integers(0, 256, (h, w, c)).astype(np.uint8))


# Minimal protocol servers for client fault-path tests.
_REVERSED_SERVER = r"""
import json, sys
print(json.dumps({"ready": True, "dim": 3})); sys.stdout.flush()
batch = [json.loads(sys.stdin.readline()) for _ in range(2)]
for msg in reversed(batch):
    print(json.dumps({"id": msg["id"], "embedding": [1.0, 2.0, float(msg["id"] + 1)]}))
sys.stdout.flush()
"""

_GARBAGE_SERVER = r"""
import json, sys
print(json.dumps({"ready": True, "dim": 3})); sys.stdout.flush()
sys.stdin.readline()
print("this is not json"); sys.stdout.flush()
"""

_ERROR_SERVER = r"""
import json, sys
print(json.dumps({"ready": True, "dim": 3})); sys.stdout.flush()
while True:
    line = sys.stdin.readline()
    if not line:
        break
    msg = json.loads(line)
    print(json.dumps({"id": msg["id"], "error": "refused"})); sys.stdout.flush()
"""

_DYING_SERVER = r"""
import json, sys
print(json.dumps({"ready": True, "dim": 3})); sys.stdout.flush()
sys.stdin.readline()
sys.exit(3)
"""


def _spawn(script):
    return ExternalProcessBackend([sys.executable, "-c", script])


class TestEchoEmbedding:
    def test_unit_norm_and_determinism(self):
        img = _image(1)
        a = echo_embedding(img, 32)
        b = echo_embedding(img, 32)
        assert np.array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)

    def test_sensitive_to_content_and_shape(self):
        base = echo_embedding(_image(2), 16)
        other = echo_embedding(_image(3), 16)
        assert not np.array_equal(base, other)
        tall = echo_embedding(_image(2, h=16, w=4), 16)
        assert not np.array_equal(base, tall)

    def test_backend_wraps_the_function(self):
        img = _image(4)
        batch = encode_batch(EchoBackend(dim=24), [img, img])
        assert np.array_equal(batch[0], echo_embedding(img, 24))
        assert np.array_equal(batch[1], batch[0])


class TestEncodeBatchContract:
    def test_empty_batch(self):
        with pytest.raises(EncoderError):
            encode_batch(EchoBackend(), [])

    def test_non_image_item(self):
        with pytest.raises(EncoderError):
            encode_batch(EchoBackend(), [np.zeros((4, 4, 3), dtype=np.uint8)])

    def test_order_preserved(self):
        images = [_image(s) for s in range(5)]
        batch = encode_batch(EchoBackend(dim=8), images)
        for image, vector in zip(images, batch):
            assert np.array_equal(vector, echo_embedding(image, 8))


class TestSimulatorBackend:
    def test_batch_length_sets_trajectory_length(self):
        backend = SimulatorBackend(SimProfile(kind="clean", seed=6, dim=16))
        batch = encode_batch(backend, [_image(0)] * 9)
        assert len(batch) == 9 and batch[0].shape == (16,)
        expect = simulate_trajectory(SimProfile(kind="clean", seed=6, dim=16), 9)
        assert np.array_equal(np.stack(batch), expect.vectors)

    def test_for_sample_reseeds_deterministically(self):
        backend = SimulatorBackend(SimProfile(kind="backdoor", seed=1))
        per = backend.for_sample("s-01", 99)
        assert per.profile.seed == derive_seed(99, "sim", "s-01")
        again = backend.for_sample("s-01", 99)
        assert per.profile.seed == again.profile.seed


class TestFilePlayback:
    def test_replays_stored_vectors(self, tmp_path):
        seq = simulate_trajectory(SimProfile(kind="clean", seed=3, dim=8), 193)
        path = tmp_path / "stored.bids"
        write_trajectory(seq, path)
        backend = FilePlaybackBackend(path)
        sentinel = [_image(0, h=4, w=4)] * 193
        batch = encode_batch(backend, sentinel)
        assert np.array_equal(np.stack(batch), seq.vectors)

    def test_batch_size_mismatch(self, tmp_path):
        seq = simulate_trajectory(SimProfile(kind="clean", seed=3, dim=8), 10)
        path = tmp_path / "stored.bids"
        write_trajectory(seq, path)
        with pytest.raises(EncoderError):
            encode_batch(FilePlaybackBackend(path), [_image(0)] * 9)


class TestExternalProcess:
    def test_drives_the_echo_server(self):
        with ExternalProcessBackend(
            [sys.executable, "-m", "maskprobe.echoserver", "--dim", "12"]
        ) as backend:
            assert backend.dim == 12
            images = [_image(s) for s in range(3)]
            batch = encode_batch(backend, images)
            for image, vector in zip(images, batch):
                assert np.array_equal(vector, echo_embedding(image, 12))
            # The process answers a second batch on the same pipe.
            again = encode_batch(backend, images[:1])
            assert np.array_equal(again[0], batch[0])

    def test_out_of_order_responses_are_matched_by_id(self):
        with _spawn(_REVERSED_SERVER) as backend:
            batch = encode_batch(backend, [_image(0), _image(1)])
            assert batch[0][2] == 1.0 and batch[1][2] == 2.0

    def test_large_batch_does_not_deadlock_the_pipe(self):
        # A full-size batch overflows both OS pipe buffers unless requests
        # and responses are streamed concurrently.
        rng = np.random.default_rng(0)
        images = [
            ImageTensor(rng.integers(0, 256, (64, 64, 3)).astype(np.uint8))
            for _ in range(193)
        ]
        with ExternalProcessBackend(
            [sys.executable, "-m", "maskprobe.echoserver", "--dim", "64"]
        ) as backend:
            batch = encode_batch(backend, images)
        assert len(batch) == 193
        assert np.array_equal(batch[57], echo_embedding(images[57], 64))

    def test_malformed_line_raises(self):
        with _spawn(_GARBAGE_SERVER) as backend:
            with pytest.raises(EncoderError, match="malformed"):
                encode_batch(backend, [_image(0)])

    def test_error_response_raises_with_id(self):
        with _spawn(_ERROR_SERVER) as backend:
            with pytest.raises(EncoderError, match="refused"):
                encode_batch(backend, [_image(0)])

    def test_process_death_raises(self):
        with _spawn(_DYING_SERVER) as backend:
            with pytest.raises(EncoderError):
                encode_batch(backend, [_image(0)])

    def test_missing_handshake_raises(self):
        with pytest.raises(EncoderError):
            ExternalProcessBackend([sys.executable, "-c", "import sys; sys.exit(1)"])

    def test_bad_command_raises(self):
        with pytest.raises(EncoderError):
            ExternalProcessBackend(["/nonexistent/encoder-binary"])
