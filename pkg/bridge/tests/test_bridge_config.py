import json
import subprocess
import sys

import pytest

from encoder_bridge import BridgeConfig, BridgeError, EchoEncoder, build_encoder


class TestBridgeConfig:
    def test_defaults(self):
        cfg = BridgeConfig()
        assert cfg.model == "echo"
        assert cfg.batch_size == 8

    @pytest.mark.parametrize("kwargs", [
        {"model": ""},
        {"batch_size": 0},
        {"batch_size": True},
        {"dim": 1},
        {"resolution": 4},
        {"mean": (0.5,)},                      # mean without std
        {"mean": (0.5, 0.5), "std": (0.5,)},   # channel mismatch
        {"mean": (0.5,), "std": (0.0,)},       # nonpositive std
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(BridgeError):
            BridgeConfig(**kwargs)

    def test_normalization_pair_accepted(self):
        cfg = BridgeConfig(mean=(0.485, 0.456, 0.406), std=(0.229, 0.224, 0.225))
        assert len(cfg.mean) == 3


class TestBuildEncoder:
    def test_echo_uses_configured_dim(self):
        enc = build_encoder(BridgeConfig(model="echo", dim=16))
        assert isinstance(enc, EchoEncoder)
        assert enc.dim == 16

    def test_hog_probes_its_dimension(self):
        enc = build_encoder(BridgeConfig(model="hog", resolution=64))
        import numpy as np
        vec = enc.encode_batch([np.zeros((10, 12, 3), dtype=np.uint8)])[0]
        assert len(vec) == enc.dim

    def test_unknown_model(self):
        with pytest.raises(BridgeError):
            build_encoder(BridgeConfig(model="magic"))

    def test_empty_tv_name(self):
        with pytest.raises(BridgeError):
            build_encoder(BridgeConfig(model="tv:"))


class TestFatalStartup:
    def test_unknown_model_exits_nonzero_before_handshake(self):
        proc = subprocess.run(
            [sys.executable, "-m", "encoder_bridge", "--model", "tv:nosuchmodel"],
            input="", capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode != 0
        assert proc.stdout == ""            # nothing emitted, handshake included
        assert "fatal" in proc.stderr

    def test_model_loader_chatter_never_reaches_stdout(self):
        """torch hub prints download progress to stdout; the server must keep
        the protocol channel clean whether the load fails (offline: fatal
        exit, empty stdout) or succeeds (handshake is the first line)."""
        proc = subprocess.run(
            [sys.executable, "-m", "encoder_bridge", "--model", "tv:resnet18"],
            input="", capture_output=True, text=True, timeout=300,
        )
        if proc.returncode != 0:
            assert proc.stdout == ""
            assert "fatal" in proc.stderr
        else:
            handshake = json.loads(proc.stdout.splitlines()[0])
            assert handshake["ready"] is True

    def test_bad_flag_combination_exits_nonzero(self):
        proc = subprocess.run(
            [sys.executable, "-m", "encoder_bridge", "--model", "echo", "--dim", "1"],
            input="", capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode != 0
        assert proc.stdout == ""

    def test_handshake_dim_matches_embeddings(self):
        proc = subprocess.Popen(
            [sys.executable, "-m", "encoder_bridge", "--model", "hog", "--resolution", "64"],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        try:
            handshake = json.loads(proc.stdout.readline())
            assert handshake["ready"] is True
            import base64
            payload = base64.b64encode(bytes(300)).decode()
            proc.stdin.write(json.dumps({"id": 5, "h": 10, "w": 10, "c": 3,
                                         "pixels_b64": payload}) + "\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            assert reply["id"] == 5
            assert len(reply["embedding"]) == handshake["dim"]
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)
        assert proc.returncode == 0
