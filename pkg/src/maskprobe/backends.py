"""Encoder backends: things that turn image batches into embedding vectors.

Three concrete backends cover the artifact's needs. SimulatorBackend ignores
pixel content entirely and emits a synthetic trajectory of the batch length,
which stands in for a compromised encoder at desk scale. FilePlaybackBackend
replays a stored trajectory. ExternalProcessBackend drives a child process
speaking the newline-delimited JSON protocol documented in the README, which
is how real models are reached.

EchoBackend computes the documented hash-projection embedding in process; it
is the reference the protocol server and any external implementation must
match byte for byte.
"""
from __future__ import annotations

import base64
import hashlib
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import EncoderError
from .masking import derive_seed
from .simulate import SimProfile, simulate_trajectory
from .trajfile import read_trajectory
from .types import EmbeddingSequence, ImageTensor


def echo_embedding(image: ImageTensor, dim: int = 64) -> np.ndarray:
    """Deterministic hash-projection of an image to a unit vector.

    Defined byte for byte so independent implementations can be compared:

    1. base = SHA-256 of b"ECHO1" + u32le(h) + u32le(w) + u32le(c) + the
       row-major pixel bytes.
    2. Component j (0-based): u = first 8 bytes of SHA-256(base + u32le(j))
       as a little-endian unsigned integer; v_j = u / 2**63 - 1.0.
    3. Normalize by sqrt(s) where s is the left-to-right float64 sum of the
       squared components.

    Every arithmetic step is IEEE-754 double precision in the order written,
    so any faithful reimplementation produces identical bits.
    """
    if not (isinstance(dim, int) and dim >= 2):
        raise EncoderError(f"echo dimension must be an integer >= 2, got {dim}")
    header = hashlib.sha256()
    header.update(b"ECHO1")
    header.update(image.height.to_bytes(4, "little"))
    header.update(image.width.to_bytes(4, "little"))
    header.update(image.channels.to_bytes(4, "little"))
    header.update(image.tobytes())
    base = header.digest()

    values = []
    for j in range(dim):
        digest = hashlib.sha256(base + j.to_bytes(4, "little")).digest()
        u = int.from_bytes(digest[:8], "little")
        values.append(u / 2**63 - 1.0)
    total = 0.0
    for v in values:
        total += v * v
    norm = total ** 0.5
    return np.array([v / norm for v in values], dtype=np.float64)


class EncoderBackend:
    """Abstract batch encoder. Subclasses implement _encode."""

    def _encode(self, images: Sequence[ImageTensor]) -> List[np.ndarray]:
        raise NotImplementedError

    def for_sample(self, sample_id: str, seed: int) -> "EncoderBackend":
        """A per-sample variant for harness runs; the default is no change.

        Backends with internal randomness reseed here so one global seed
        plus a sample id pins every trajectory in an evaluation.
        """
        del sample_id, seed
        return self

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def encode_batch(backend: EncoderBackend, images: Sequence[ImageTensor]) -> List[np.ndarray]:
    """Encode a batch, enforcing the backend contract.

    One embedding per image, order preserved, single shared dimension.
    """
    if len(images) == 0:
        raise EncoderError("empty batch")
    for image in images:
        if not isinstance(image, ImageTensor):
            raise EncoderError(f"batch items must be ImageTensor, got {type(image).__name__}")
    vectors = backend._encode(list(images))
    if len(vectors) != len(images):
        raise EncoderError(f"backend returned {len(vectors)} embeddings for {len(images)} images")
    out = []
    dim = None
    for i, vec in enumerate(vectors):
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise EncoderError(f"embedding {i} has dimension {arr.shape[0]}, expected {dim}")
        out.append(arr)
    return out


class EchoBackend(EncoderBackend):
    """In-process hash-projection encoder, for tests and protocol reference."""

    def __init__(self, dim: int = 64):
        if not (isinstance(dim, int) and dim >= 2):
            raise EncoderError(f"echo dimension must be an integer >= 2, got {dim}")
        self.dim = dim

    def _encode(self, images):
        return [echo_embedding(image, self.dim) for image in images]


class SimulatorBackend(EncoderBackend):
    """Synthetic encoder: the batch becomes one simulated trajectory.

    Pixel content is ignored; the batch length sets the trajectory length.
    This models a compromised encoder whose embedding dynamics follow the
    configured profile.
    """

    def __init__(self, profile: SimProfile):
        self.profile = profile

    def _encode(self, images):
        seq = simulate_trajectory(self.profile, len(images))
        return [seq[i] for i in range(len(seq))]

    def for_sample(self, sample_id, seed):
        return SimulatorBackend(self.profile.reseeded(derive_seed(seed, "sim", sample_id)))


class FilePlaybackBackend(EncoderBackend):
    """Replays a stored trajectory; the batch length must match the file."""

    def __init__(self, path):
        self.path = str(path)
        self.sequence: EmbeddingSequence = read_trajectory(path)

    def _encode(self, images):
        if len(images) != len(self.sequence):
            raise EncoderError(
                f"playback file {self.path} holds {len(self.sequence)} vectors, "
                f"batch has {len(images)}"
            )
        return [self.sequence[i] for i in range(len(images))]


@dataclass
class _Handshake:
    dim: int


class ExternalProcessBackend(EncoderBackend):
    """Protocol client driving a child encoder process over stdio.

    Requests are newline-delimited JSON, one per image; responses may arrive
    in any order and are matched by id. Any malformed line, declared error,
    or early exit surfaces as EncoderError; there is no silent fallback.
    """

    def __init__(self, command, start_timeout: float = 120.0):
        if isinstance(command, str):
            argv = shlex.split(command)
        else:
            argv = list(command)
        if not argv:
            raise EncoderError("empty encoder command")
        self.command = argv
        self._lock = threading.Lock()
        self._next_id = 0
        self._stderr_tail: List[str] = []
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise EncoderError(f"cannot start encoder {argv!r}: {exc}") from exc
        self._drain = threading.Thread(target=self._collect_stderr, daemon=True)
        self._drain.start()
        self._handshake = self._read_handshake(start_timeout)

    @property
    def dim(self) -> int:
        return self._handshake.dim

    def _collect_stderr(self):
        # Keep a bounded tail for diagnostics in EncoderError messages.
        try:
            for line in self._proc.stderr:
                self._stderr_tail.append(line.rstrip("\n"))
                if len(self._stderr_tail) > 20:
                    del self._stderr_tail[0]
        except ValueError:
            pass

    def _diag(self) -> str:
        tail = "; ".join(self._stderr_tail[-5:])
        code = self._proc.poll()
        state = f"exit code {code}" if code is not None else "still running"
        return f"({state}{'; stderr: ' + tail if tail else ''})"

    def _read_line(self) -> str:
        line = self._proc.stdout.readline()
        if line == "":
            raise EncoderError(f"encoder closed its output {self._diag()}")
        return line

    def _read_handshake(self, timeout: float) -> _Handshake:
        del timeout  # The blocking readline suffices; child startup is local.
        line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EncoderError(f"bad handshake line {line!r} {self._diag()}") from exc
        if not (isinstance(msg, dict) and msg.get("ready") is True):
            raise EncoderError(f"handshake missing ready flag: {line!r}")
        dim = msg.get("dim")
        if not (isinstance(dim, int) and dim >= 2):
            raise EncoderError(f"handshake declares invalid dimension: {line!r}")
        return _Handshake(dim=dim)

    def _encode(self, images):
        with self._lock:
            if self._proc.poll() is not None:
                raise EncoderError(f"encoder process is gone {self._diag()}")
            ids = list(range(self._next_id, self._next_id + len(images)))
            self._next_id += len(images)
            write_failure: List[str] = []

            def feed():
                # Requests go out from a helper thread so responses can be
                # drained concurrently: writing a large batch up front can
                # deadlock once both pipe buffers fill. A write failure kills
                # the child so the reader sees EOF instead of waiting forever.
                try:
                    for request_id, image in zip(ids, images):
                        request = {
                            "id": request_id,
                            "h": image.height,
                            "w": image.width,
                            "c": image.channels,
                            "pixels_b64": base64.b64encode(image.tobytes()).decode("ascii"),
                        }
                        self._proc.stdin.write(json.dumps(request) + "\n")
                    self._proc.stdin.flush()
                except (BrokenPipeError, OSError, ValueError) as exc:
                    write_failure.append(str(exc))
                    self._proc.kill()

            pending = {request_id: slot for slot, request_id in enumerate(ids)}
            results: List[Optional[np.ndarray]] = [None] * len(ids)
            errors: List[str] = []
            writer = threading.Thread(target=feed, daemon=True)
            writer.start()
            # Drain every response of this batch even after a per-request
            # error, so a later batch never reads a stale line. Only framing
            # damage (unparseable line, unknown id) abandons the stream.
            try:
                while pending:
                    line = self._read_line()
                    try:
                        msg = json.loads(line)
                    except json.JSONDecodeError as exc:
                        self.close()
                        raise EncoderError(f"malformed response line {line!r}") from exc
                    if not isinstance(msg, dict) or "id" not in msg:
                        self.close()
                        raise EncoderError(f"response without id: {line!r}")
                    response_id = msg["id"]
                    if response_id not in pending:
                        self.close()
                        raise EncoderError(f"response for unknown id {response_id!r}")
                    slot = pending.pop(response_id)
                    if "error" in msg:
                        errors.append(f"id {response_id}: {msg['error']}")
                        continue
                    embedding = msg.get("embedding")
                    if not isinstance(embedding, list) or len(embedding) != self._handshake.dim:
                        errors.append(
                            f"id {response_id}: embedding is not a list of {self._handshake.dim} floats"
                        )
                        continue
                    try:
                        results[slot] = np.asarray(embedding, dtype=np.float64)
                    except (TypeError, ValueError):
                        errors.append(f"id {response_id}: non-numeric embedding")
            except EncoderError:
                writer.join(timeout=5.0)
                if write_failure:
                    raise EncoderError(
                        f"encoder rejected input: {write_failure[0]} {self._diag()}"
                    ) from None
                raise
            writer.join(timeout=5.0)
            if write_failure:
                raise EncoderError(f"encoder rejected input: {write_failure[0]} {self._diag()}")
            if errors:
                raise EncoderError("encoder reported errors: " + "; ".join(errors))
            return results

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        try:
            if proc.stdin and not proc.stdin.closed:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
