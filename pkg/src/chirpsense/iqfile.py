"""Reader/writer for the ``CIQ1`` interleaved float32 IQ format.

Layout (little endian)::

    b"CIQ1" | u32 sample rate (Hz) | u32 sample count | count x (f32 I, f32 Q)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CIQ1"
_HEADER = struct.Struct("<4sII")


class IqFormatError(ValueError):
    pass


def encode_iq(samples, fs: int) -> bytes:
    samples = np.asarray(samples).astype(np.complex64, copy=False).reshape(-1)
    return _HEADER.pack(MAGIC, int(fs), samples.size) + samples.astype("<c8").tobytes()


def decode_iq(data: bytes, source: str = "<bytes>") -> tuple[np.ndarray, int]:
    if len(data) < _HEADER.size:
        raise IqFormatError(f"{source}: truncated header ({len(data)} bytes)")
    magic, fs, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise IqFormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * count
    if len(data) != expected:
        raise IqFormatError(
            f"{source}: header declares {count} samples ({expected} bytes) but file has {len(data)} bytes"
        )
    samples = np.frombuffer(data, dtype="<c8", offset=_HEADER.size, count=count)
    return samples.astype(np.complex64), fs


def write_iq(path, samples, fs: int) -> None:
    Path(path).write_bytes(encode_iq(samples, fs))


def read_iq(path) -> tuple[np.ndarray, int]:
    """Return ``(samples as complex64, sample rate)``."""
    path = Path(path)
    return decode_iq(path.read_bytes(), str(path))
