"""
CSI trace codec.

Layout (little-endian):
    magic "CSI5" | version u16 | antenna_count u16 | subcarrier_count u32 |
    frame_count u32 | frame_interval_us u32 | carrier_hz u64 |
    float32 (re, im) pairs, frame-major, then antenna, then subcarrier.
"""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from src.csi.types import CsiRecording
from src.exceptions import CorruptTraceError, ValidationError

MAGIC = b"CSI5"
VERSION = 1
HEADER = struct.Struct("<4sHHIIIQ")


def encode_trace(rec: CsiRecording) -> bytes:
    """Serialize a recording; samples are stored as float32 pairs."""
    header = HEADER.pack(
        MAGIC,
        VERSION,
        rec.antenna_count,
        rec.subcarrier_count,
        rec.frame_count,
        int(round(rec.frame_interval * 1e6)),
        int(round(rec.carrier_hz)),
    )
    # (antenna, subcarrier, frame) -> (frame, antenna, subcarrier)
    payload = np.ascontiguousarray(rec.data.transpose(2, 0, 1)).astype("<c8")
    return header + payload.tobytes()


def decode_trace(raw: bytes, source: str = "<bytes>") -> CsiRecording:
    """Parse trace bytes; rejects unknown magic/version and truncated payloads."""
    if len(raw) < HEADER.size:
        raise CorruptTraceError(source, f"header needs {HEADER.size} bytes, got {len(raw)}")
    magic, version, antennas, subcarriers, frames, interval_us, carrier_hz = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptTraceError(source, f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptTraceError(source, f"unsupported version {version}")
    if interval_us == 0:
        raise CorruptTraceError(source, "frame interval is zero")

    expected = antennas * subcarriers * frames * 8
    payload = raw[HEADER.size:]
    if len(payload) != expected:
        raise CorruptTraceError(source, f"payload is {len(payload)} bytes, header implies {expected}")

    samples = np.frombuffer(payload, dtype="<c8").reshape(frames, antennas, subcarriers)
    if not np.all(np.isfinite(samples)):
        raise CorruptTraceError(source, "payload contains NaN or Inf")
    try:
        return CsiRecording(
            data=samples.transpose(1, 2, 0).astype(np.complex128),
            frame_interval=interval_us / 1e6,
            carrier_hz=float(carrier_hz),
        )
    except ValidationError as e:
        raise CorruptTraceError(source, e.reason)


def read_trace(path: Union[str, Path]) -> CsiRecording:
    p = Path(path)
    if not p.is_file():
        raise CorruptTraceError(str(p), "file not found")
    return decode_trace(p.read_bytes(), source=str(p))
