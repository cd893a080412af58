import logging
from typing import Optional

import numpy as np

from src.csi.types import CsiRecording, FeatureTensors, NormalizedCsi, SounderGrid
from src.exceptions import DegenerateReferenceError, ValidationError

logger = logging.getLogger(__name__)

# Below this magnitude a reference symbol or sample is not divided by.
MIN_REFERENCE_MAGNITUDE = 1e-12
# Relative fade depth (against the median) that masks a subcarrier.
MASK_RELATIVE_DEPTH = 1e-6


def _first_degenerate(reference: np.ndarray):
    magnitude = np.abs(reference)
    bad = np.argwhere(magnitude < MIN_REFERENCE_MAGNITUDE)
    if len(bad) == 0:
        return None
    k, t = bad[0]
    return int(k), int(t), float(magnitude[k, t])


def estimate_csi(grid: SounderGrid) -> np.ndarray:
    """
    Least-squares channel estimate H(k,t) = Y(k,t) / X(k,t) on the resource grid.

    Raises:
        DegenerateReferenceError: if any reference symbol is below 1e-12 in magnitude.
    """
    bad = _first_degenerate(grid.reference)
    if bad:
        raise DegenerateReferenceError(*bad)
    return grid.received / grid.reference


def reference_mask(rec: CsiRecording, ref_antenna: int = 0) -> np.ndarray:
    """
    Boolean mask over subcarriers: False where the reference antenna fades below
    1e-6 x its median magnitude in any frame.
    """
    if not 0 <= ref_antenna < rec.antenna_count:
        raise ValidationError("ref_antenna", f"{ref_antenna} outside 0..{rec.antenna_count - 1}")
    magnitude = np.abs(rec.data[ref_antenna])
    floor = max(MASK_RELATIVE_DEPTH * float(np.median(magnitude)), MIN_REFERENCE_MAGNITUDE)
    usable = np.all(magnitude >= floor, axis=1)
    masked = int(np.count_nonzero(~usable))
    if masked:
        logger.warning(f"Masked {masked}/{rec.subcarrier_count} subcarriers in deep reference fades")
    return usable


def normalize_antenna_ratio(
        rec: CsiRecording,
        ref_antenna: int = 0,
        mask: Optional[np.ndarray] = None,
) -> NormalizedCsi:
    """
    Divide every antenna by the reference antenna: H(i,k,t) / H(ref,k,t).

    Offsets common to all receive antennas cancel in the ratio, and the reference
    slice becomes exactly 1+0j.

    Args:
        rec: source recording
        ref_antenna: index of the denominator antenna
        mask: optional usable-subcarrier mask from `reference_mask`; masked
              subcarriers are set to 1+0j on every antenna instead of divided

    Raises:
        DegenerateReferenceError: a usable reference sample is below 1e-12.
    """
    if not 0 <= ref_antenna < rec.antenna_count:
        raise ValidationError("ref_antenna", f"{ref_antenna} outside 0..{rec.antenna_count - 1}")
    usable = np.ones(rec.subcarrier_count, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if usable.shape != (rec.subcarrier_count,):
        raise ValidationError("mask", f"expected {rec.subcarrier_count} entries, got {usable.shape}")

    reference = rec.data[ref_antenna]
    bad = _first_degenerate(reference[usable])
    if bad:
        k_used, t, magnitude = bad
        raise DegenerateReferenceError(int(np.flatnonzero(usable)[k_used]), t, magnitude)

    ratio = np.ones_like(rec.data)
    ratio[:, usable, :] = rec.data[:, usable, :] / reference[usable][None, :, :]
    # x / x is 1 for finite non-zero x, but pin the identity explicitly
    ratio[ref_antenna] = 1.0 + 0.0j
    return NormalizedCsi(ratio, ref_antenna, rec.frame_interval, usable)


def unwrap_phase(angles: np.ndarray) -> np.ndarray:
    """Sequential unwrap along the last axis: add +-2*pi whenever a step exceeds pi."""
    return np.unwrap(angles, axis=-1)


def extract_features(norm: NormalizedCsi) -> FeatureTensors:
    """Amplitude |H~| and phase unwrap(angle(H~)) along time per (i,k)."""
    return FeatureTensors(
        amplitude=np.abs(norm.data),
        phase=unwrap_phase(np.angle(norm.data)),
        frame_interval=norm.frame_interval,
        usable=norm.usable,
    )


def frame_delta(rec: CsiRecording, antenna: int = 0) -> np.ndarray:
    """
    S(t) = sum_k |H(k,t) - H(k,t-1)| at one antenna; length frame_count - 1.
    Zero exactly when the antenna is frame-constant.
    """
    if not 0 <= antenna < rec.antenna_count:
        raise ValidationError("antenna", f"{antenna} outside 0..{rec.antenna_count - 1}")
    return np.abs(np.diff(rec.data[antenna], axis=-1)).sum(axis=0)
