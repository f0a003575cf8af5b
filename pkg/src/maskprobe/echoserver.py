"""Stdio encoder serving the documented hash-projection embedding.

Speaks the newline-delimited JSON encoder protocol: a ready/dim handshake
line, then one response per request line, matched by id. Exists so protocol
integration tests have a real child process with zero ML dependencies.

Run as: python3 -m maskprobe.echoserver --dim 64
"""
from __future__ import annotations

import argparse
import base64
import binascii
import json
import sys

import numpy as np

from .backends import echo_embedding
from .types import ImageTensor


def _respond(msg: dict) -> None:
    sys.stdout.write(json.dumps(msg) + "\n")
    sys.stdout.flush()


def _handle(msg: dict, dim: int) -> dict:
    request_id = msg.get("id")
    if not isinstance(request_id, int) or request_id < 0:
        raise ValueError("request id must be a nonnegative integer")
    try:
        h, w, c = int(msg["h"]), int(msg["w"]), int(msg["c"])
        pixels = base64.b64decode(msg["pixels_b64"], validate=True)
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        return {"id": request_id, "error": f"bad request: {exc}"}
    if h < 1 or w < 1 or c not in (1, 3):
        return {"id": request_id, "error": f"bad image shape {h}x{w}x{c}"}
    if len(pixels) != h * w * c:
        return {"id": request_id, "error": f"pixel payload is {len(pixels)} bytes, expected {h * w * c}"}
    image = ImageTensor(np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, c))
    embedding = echo_embedding(image, dim)
    return {"id": request_id, "embedding": [float(v) for v in embedding]}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="maskprobe-echoserver", description=__doc__)
    parser.add_argument("--dim", type=int, default=64, help="embedding dimension (default 64)")
    args = parser.parse_args(argv)
    if args.dim < 2:
        parser.error("--dim must be >= 2")

    _respond({"ready": True, "dim": args.dim})
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("request must be a JSON object")
            response = _handle(msg, args.dim)
        except Exception as exc:
            # No usable id to answer with; log and keep serving.
            print(f"echoserver: dropped malformed line: {exc}", file=sys.stderr)
            sys.stderr.flush()
            continue
        _respond(response)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
