"""
Domain types for CSI tensors.

All arrays are copied on construction and frozen (read-only), so instances can
be shared between threads without coordination.
"""
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from src.exceptions import ContractError, DegenerateReferenceError, ValidationError

DEFAULT_FRAME_INTERVAL = 0.020
DEFAULT_CARRIER_HZ = 3.5e9


def _frozen(array: np.ndarray, dtype, name: str) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    if not np.all(np.isfinite(out)):
        raise ValidationError(name, "contains NaN or Inf")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SounderGrid:
    """Received symbols Y(k,t) and the known reference symbols X(k,t)."""
    received: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        received = _frozen(self.received, np.complex128, "received")
        reference = _frozen(self.reference, np.complex128, "reference")
        if received.ndim != 2:
            raise ContractError("SounderGrid", "(subcarrier, frame) matrix", received.shape)
        if received.shape != reference.shape:
            raise ContractError("SounderGrid", received.shape, reference.shape)
        zeros = np.argwhere(reference == 0)
        if len(zeros):
            k, t = zeros[0]
            raise DegenerateReferenceError(int(k), int(t), 0.0)
        object.__setattr__(self, "received", received)
        object.__setattr__(self, "reference", reference)


@dataclass(frozen=True)
class CsiRecording:
    """
    Complex CSI H(i,k,t) indexed [antenna, subcarrier, frame] plus timing metadata.
    """
    data: np.ndarray
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    carrier_hz: float = DEFAULT_CARRIER_HZ

    def __post_init__(self):
        data = _frozen(self.data, np.complex128, "data")
        if data.ndim != 3:
            raise ContractError("CsiRecording", "(antenna, subcarrier, frame) tensor", data.shape)
        antennas, subcarriers, frames = data.shape
        if antennas < 2:
            raise ValidationError("antenna_count", f"must be >= 2, got {antennas}")
        if subcarriers < 1:
            raise ValidationError("subcarrier_count", f"must be >= 1, got {subcarriers}")
        if frames < 2:
            raise ValidationError("frame_count", f"must be >= 2, got {frames}")
        if not self.frame_interval > 0:
            raise ValidationError("frame_interval", f"must be > 0, got {self.frame_interval}")
        if not self.carrier_hz > 0:
            raise ValidationError("carrier_hz", f"must be > 0, got {self.carrier_hz}")
        object.__setattr__(self, "data", data)

    @property
    def antenna_count(self) -> int:
        return self.data.shape[0]

    @property
    def subcarrier_count(self) -> int:
        return self.data.shape[1]

    @property
    def frame_count(self) -> int:
        return self.data.shape[2]

    @property
    def duration(self) -> float:
        return self.frame_count * self.frame_interval

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.frame_interval

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_hz

    def times(self) -> np.ndarray:
        return np.arange(self.frame_count) * self.frame_interval

    def with_data(self, data: np.ndarray) -> "CsiRecording":
        return replace(self, data=data)

    def frame_slice(self, start_s: float, end_s: float) -> "CsiRecording":
        """Frames whose timestamps fall in [start_s, end_s)."""
        first = int(round(start_s / self.frame_interval))
        last = int(round(end_s / self.frame_interval))
        first = max(first, 0)
        last = min(last, self.frame_count)
        if last - first < 2:
            raise ValidationError("window", f"[{start_s}, {end_s}] s holds fewer than 2 frames")
        return self.with_data(self.data[:, :, first:last])


@dataclass(frozen=True)
class NormalizedCsi:
    """
    Antenna-ratio CSI H(i,k,t) / H(ref,k,t).
    `usable` flags subcarriers that survived reference masking; masked ones hold 1+0j.
    """
    data: np.ndarray
    ref_antenna: int
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    usable: Optional[np.ndarray] = None

    def __post_init__(self):
        data = _frozen(self.data, np.complex128, "data")
        if data.ndim != 3:
            raise ContractError("NormalizedCsi", "(antenna, subcarrier, frame) tensor", data.shape)
        if not 0 <= self.ref_antenna < data.shape[0]:
            raise ValidationError("ref_antenna", f"{self.ref_antenna} outside 0..{data.shape[0] - 1}")
        usable = np.ones(data.shape[1], dtype=bool) if self.usable is None else self.usable
        usable = _frozen(usable, bool, "usable")
        if usable.shape != (data.shape[1],):
            raise ContractError("NormalizedCsi", (data.shape[1],), usable.shape)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "usable", usable)


@dataclass(frozen=True)
class FeatureTensors:
    """Amplitude A(i,k,t) and phase unwrapped along t."""
    amplitude: np.ndarray
    phase: np.ndarray
    frame_interval: float = DEFAULT_FRAME_INTERVAL
    usable: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        amplitude = _frozen(self.amplitude, np.float64, "amplitude")
        phase = _frozen(self.phase, np.float64, "phase")
        if amplitude.ndim != 3 or amplitude.shape != phase.shape:
            raise ContractError("FeatureTensors", amplitude.shape, phase.shape)
        if np.any(amplitude < 0):
            raise ValidationError("amplitude", "must be non-negative")
        usable = np.ones(amplitude.shape[1], dtype=bool) if self.usable is None else self.usable
        usable = _frozen(usable, bool, "usable")
        if usable.shape != (amplitude.shape[1],):
            raise ContractError("FeatureTensors", (amplitude.shape[1],), usable.shape)
        object.__setattr__(self, "amplitude", amplitude)
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "usable", usable)

    @property
    def sample_rate_hz(self) -> float:
        return 1.0 / self.frame_interval
