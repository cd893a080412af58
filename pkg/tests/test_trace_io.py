import struct

import numpy as np
import pytest

from src.csi.trace_io import HEADER, MAGIC, decode_trace, encode_trace, read_trace
from src.csi.types import CsiRecording
from src.exceptions import CorruptTraceError
from src.sim.channel import simulate
from src.sim.config import SimulationConfig


@pytest.fixture
def rec():
    rng = np.random.default_rng(3)
    data = rng.standard_normal((2, 5, 7)) + 1j * rng.standard_normal((2, 5, 7))
    return CsiRecording(data, frame_interval=0.02, carrier_hz=3.5e9)


def test_round_trip_keeps_float32_samples_and_metadata(rec):
    decoded = decode_trace(encode_trace(rec))
    np.testing.assert_array_equal(decoded.data, rec.data.astype(np.complex64))
    assert decoded.frame_interval == pytest.approx(0.02)
    assert decoded.carrier_hz == 3.5e9
    assert encode_trace(decoded) == encode_trace(rec)


def test_header_layout(rec):
    raw = encode_trace(rec)
    magic, version, antennas, subcarriers, frames, interval_us, carrier = HEADER.unpack_from(raw)
    assert (magic, version, antennas, subcarriers, frames, interval_us, carrier) == (
        b"CSI5", 1, 2, 5, 7, 20000, 3_500_000_000
    )
    assert len(raw) == HEADER.size + 2 * 5 * 7 * 8
    # frame-major, then antenna, then subcarrier
    first = np.frombuffer(raw, dtype="<f4", count=4, offset=HEADER.size)
    assert first[0] == np.float32(rec.data[0, 0, 0].real)
    assert first[2] == np.float32(rec.data[0, 1, 0].real)


def test_sixty_second_simulation_has_3000_frames():
    rec, _ = simulate(SimulationConfig(duration=60.0, subcarrier_count=4, seed=1))
    frames = HEADER.unpack_from(encode_trace(rec))[4]
    assert frames == 3000


def test_rejects_bad_magic(rec):
    raw = b"XXXX" + encode_trace(rec)[4:]
    with pytest.raises(CorruptTraceError) as err:
        decode_trace(raw, "bad.csi")
    assert "bad magic" in str(err.value)
    assert err.value.exit_code == 3


def test_rejects_unknown_version(rec):
    raw = bytearray(encode_trace(rec))
    struct.pack_into("<H", raw, 4, 2)
    with pytest.raises(CorruptTraceError, match="version"):
        decode_trace(bytes(raw))


@pytest.mark.parametrize("cut", [3, HEADER.size - 1, HEADER.size + 5])
def test_rejects_truncated_input(rec, cut):
    with pytest.raises(CorruptTraceError):
        decode_trace(encode_trace(rec)[:cut])


def test_rejects_non_finite_payload(rec):
    raw = bytearray(encode_trace(rec))
    struct.pack_into("<f", raw, HEADER.size, float("nan"))
    with pytest.raises(CorruptTraceError, match="NaN"):
        decode_trace(bytes(raw))


def test_rejects_zero_interval_and_single_antenna():
    payload = np.zeros(2 * 1 * 3, dtype="<c8").tobytes()
    zero_interval = HEADER.pack(MAGIC, 1, 2, 1, 3, 0, 1) + payload
    with pytest.raises(CorruptTraceError):
        decode_trace(zero_interval)
    one_antenna = HEADER.pack(MAGIC, 1, 1, 1, 3, 20000, 1) + np.zeros(3, dtype="<c8").tobytes()
    with pytest.raises(CorruptTraceError, match="must be >= 2"):
        decode_trace(one_antenna)


def test_read_trace(tmp_path, rec):
    path = tmp_path / "night.csi"
    path.write_bytes(encode_trace(rec))
    assert read_trace(path).frame_count == 7
    with pytest.raises(CorruptTraceError, match="not found"):
        read_trace(tmp_path / "missing.csi")
