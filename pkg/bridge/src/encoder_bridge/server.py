"""Stdio protocol server.

Wire format, one JSON object per line:

    handshake (server -> client):  {"ready": true, "dim": <int>}
    request   (client -> server):  {"id": <u64>, "h": <int>, "w": <int>,
                                    "c": <int>, "pixels_b64": "<base64>"}
    response  (server -> client):  {"id": <u64>, "embedding": [<floats>]}
                                or {"id": <u64>, "error": "<message>"}

A single reader thread feeds a queue; the main loop drains whatever is
already waiting (up to batch_size) and encodes it as one batch, so bursts
amortize model overhead while a lone request is answered immediately. One
bad request yields an error response and never terminates the process;
lines that cannot be attributed to an id (broken JSON, missing id) are
noted on stderr and dropped, since there is no id to answer.
"""
from __future__ import annotations

import base64
import binascii
import contextlib
import json
import queue
import sys
import threading
from typing import List, Optional, Tuple

import numpy as np

from .config import BridgeConfig, BridgeError
from .encoders import EncoderBase, build_encoder


class _RequestError(Exception):
    """Per-request defect: answered with an error response, never fatal."""


def _decode_request(msg: dict) -> Tuple[int, np.ndarray]:
    for field in ("h", "w", "c", "pixels_b64"):
        if field not in msg:
            raise _RequestError(f"missing field {field!r}")
    h, w, c = msg["h"], msg["w"], msg["c"]
    for name, value in (("h", h), ("w", w), ("c", c)):
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 1):
            raise _RequestError(f"{name} must be a positive integer, got {value!r}")
    if not isinstance(msg["pixels_b64"], str):
        raise _RequestError("pixels_b64 must be a base64 string")
    try:
        pixels = base64.b64decode(msg["pixels_b64"], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _RequestError(f"pixels_b64 is not valid base64: {exc}") from exc
    expected = h * w * c
    if len(pixels) != expected:
        raise _RequestError(f"pixel payload is {len(pixels)} bytes, expected {expected}")
    image = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, c)
    return msg["id"], image


def _valid_id(msg) -> Optional[int]:
    if not isinstance(msg, dict):
        return None
    rid = msg.get("id")
    if isinstance(rid, int) and not isinstance(rid, bool) and rid >= 0:
        return rid
    return None


def _read_lines(stream, out: queue.Queue):
    for line in stream:
        out.put(line)
    out.put(None)


def serve(config: BridgeConfig, stdin=None, stdout=None, stderr=None) -> int:
    """Run the protocol server until stdin closes. Returns the exit code.

    Encoder construction happens before the handshake: a model that cannot
    load produces a message on stderr and a nonzero return with nothing on
    stdout, so clients fail fast instead of parsing a broken stream.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr

    try:
        # Model loaders chatter on stdout (torch hub prints download
        # progress there); reroute it so nothing precedes the handshake
        # on the protocol channel.
        with contextlib.redirect_stdout(stderr):
            encoder = build_encoder(config)
    except BridgeError as exc:
        print(f"encoder-bridge: fatal: {exc}", file=stderr, flush=True)
        return 2

    print(json.dumps({"ready": True, "dim": encoder.dim}), file=stdout, flush=True)

    lines: queue.Queue = queue.Queue()
    reader = threading.Thread(target=_read_lines, args=(stdin, lines), daemon=True)
    reader.start()

    eof = False
    while not eof:
        first = lines.get()
        if first is None:
            break
        batch_lines = [first]
        while len(batch_lines) < config.batch_size:
            try:
                nxt = lines.get_nowait()
            except queue.Empty:
                break
            if nxt is None:
                eof = True
                break
            batch_lines.append(nxt)
        _answer_batch(encoder, batch_lines, stdout, stderr)
    return 0


def _answer_batch(encoder: EncoderBase, batch_lines: List[str], stdout, stderr) -> None:
    requests: List[Tuple[int, np.ndarray]] = []
    for line in batch_lines:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            print(f"encoder-bridge: ignoring non-JSON line: {line[:80]!r}", file=stderr, flush=True)
            continue
        rid = _valid_id(msg)
        if rid is None:
            print(f"encoder-bridge: ignoring line without usable id: {line[:80]!r}",
                  file=stderr, flush=True)
            continue
        try:
            requests.append(_decode_request(msg))
        except _RequestError as exc:
            _respond(stdout, {"id": rid, "error": str(exc)})
    if not requests:
        return
    try:
        vectors = encoder.encode_batch([image for _, image in requests])
        for (rid, _), vector in zip(requests, vectors):
            _respond(stdout, {"id": rid, "embedding": vector})
    except Exception:
        # The batch failed as a whole; retry one by one so a single poisoned
        # image cannot take its neighbors down with it.
        for rid, image in requests:
            try:
                vector = encoder.encode_batch([image])[0]
                _respond(stdout, {"id": rid, "embedding": vector})
            except Exception as exc:
                _respond(stdout, {"id": rid, "error": f"encoder failed: {exc}"})


def _respond(stdout, payload: dict) -> None:
    print(json.dumps(payload), file=stdout, flush=True)
