"""Binary trace files.

Layout: 16-byte magic/version header, three little-endian uint32 fields
(``sample_rate_hz``, ``channel_count``, ``samples_per_channel``), then the
samples as little-endian float64, channel-major.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError, ShapeError

MAGIC = b"TDMTRACE\x00\x00\x00\x00\x00\x00\x00\x01"  # 15-byte tag + version 1
_FIELDS = struct.Struct("<III")
HEADER_SIZE = len(MAGIC) + _FIELDS.size
SIGNAL_CHANNELS = ("A.x", "B.x", "A.p", "B.p")


def write_trace_file(path, channels, sample_rate: float):
    """Write a ``(channels, samples)`` array; returns the number of bytes written."""
    data = np.ascontiguousarray(np.atleast_2d(np.asarray(channels, dtype=np.float64)))
    if data.ndim != 2:
        raise ShapeError("trace data must be 2-D (channels, samples)")
    rate = int(round(sample_rate))
    if abs(rate - sample_rate) > 1e-6 or not (0 < rate < 2**32):
        raise ConfigurationError(f"sample rate {sample_rate!r} is not a representable integer number of Hz")
    payload = MAGIC + _FIELDS.pack(rate, data.shape[0], data.shape[1]) + data.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)


def read_trace_file(path):
    """Returns ``(channels, sample_rate)``; the array has shape ``(channels, samples)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE or blob[: len(MAGIC) - 1] != MAGIC[:-1]:
        raise ConfigurationError(f"{path}: not a trace file")
    if blob[len(MAGIC) - 1] != MAGIC[-1]:
        raise ConfigurationError(f"{path}: unsupported trace version {blob[len(MAGIC) - 1]}")
    rate, n_ch, n_s = _FIELDS.unpack_from(blob, len(MAGIC))
    expected = HEADER_SIZE + 8 * n_ch * n_s
    if len(blob) != expected:
        raise ShapeError(f"{path}: {len(blob)} bytes, header implies {expected}")
    data = np.frombuffer(blob, dtype="<f8", offset=HEADER_SIZE).reshape(n_ch, n_s).astype(np.float64)
    return data, float(rate)


def frame_path(directory, role: str, frame: int):
    return f"{directory}/{role}_{frame:05d}.trc"
