"""Binary trajectory files.

Layout, all little-endian:

    offset 0   magic   4 bytes  b"BIDS"
    offset 4   version u8       1
    offset 5   count   u32      number of vectors, >= 1
    offset 9   dim     u32      vector dimension, >= 2
    offset 13  payload count * dim float32, row-major, index 0 first

The payload length must be exactly count * dim * 4 bytes. Values are stored
in single precision, so writing narrows float64 input; sequences whose values
are already float32-representable (simulator output, anything read from this
format) round-trip bit for bit.
"""
from __future__ import annotations

import struct
from typing import Union

import numpy as np

from .errors import FormatError
from .types import EmbeddingSequence

MAGIC = b"BIDS"
VERSION = 1
_HEADER = struct.Struct("<4sBII")
HEADER_SIZE = _HEADER.size


def write_trajectory(seq: EmbeddingSequence, path) -> None:
    """Write a sequence to ``path`` in the trajectory format."""
    if not isinstance(seq, EmbeddingSequence):
        seq = EmbeddingSequence(seq)
    payload = np.ascontiguousarray(seq.vectors, dtype="<f4").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, len(seq), seq.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_trajectory(path) -> EmbeddingSequence:
    """Read a trajectory file back into an EmbeddingSequence (float64)."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_trajectory(data)


def parse_trajectory(data: Union[bytes, bytearray]) -> EmbeddingSequence:
    """Parse trajectory bytes; FormatError carries the offending byte offset."""
    if len(data) < HEADER_SIZE:
        raise FormatError(
            f"truncated header: {len(data)} bytes, expected {HEADER_SIZE}", offset=len(data)
        )
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}", offset=4)
    if count < 1:
        raise FormatError(f"count must be >= 1, got {count}", offset=5)
    if dim < 2:
        raise FormatError(f"dim must be >= 2, got {dim}", offset=9)
    expected = count * dim * 4
    actual = len(data) - HEADER_SIZE
    if actual < expected:
        raise FormatError(
            f"truncated payload: {actual} bytes, expected {expected}", offset=HEADER_SIZE
        )
    if actual > expected:
        raise FormatError(
            f"trailing data: {actual} bytes of payload, expected {expected}",
            offset=HEADER_SIZE + expected,
        )
    vectors = np.frombuffer(data, dtype="<f4", count=count * dim, offset=HEADER_SIZE)
    return EmbeddingSequence(vectors.reshape(count, dim).astype(np.float64))
