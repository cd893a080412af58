"""
Respiration-rate estimation from antenna-ratio CSI.

Pipeline: normalize -> features -> most stable subcarrier -> zero-phase
bandpass of amplitude and phase -> spectral concentration per modality ->
peak-interval rate on the better modality, falling back to the spectral peak.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.fft import rfft, rfftfreq
from scipy.signal import butter, find_peaks, get_window, sosfiltfilt

from src.csi.processing import extract_features, normalize_antenna_ratio, reference_mask
from src.csi.types import CsiRecording, FeatureTensors
from src.exceptions import (
    BandResolutionError,
    InsufficientDataError,
    NoUsableSubcarrierError,
    ValidationError,
)

logger = logging.getLogger(__name__)

FILTER_ORDER = 4
MIN_WINDOW_S = 30.0
DEFAULT_PROMINENCE_FACTOR = 0.25
# Pipeline peak spacing as a fraction of the shortest in-band period.
PEAK_SPACING_FACTOR = 0.7
ZERO_PAD_FACTOR = 4


class Modality(str, Enum):
    AMPLITUDE = "amplitude"
    PHASE = "phase"


@dataclass(frozen=True)
class BandConfig:
    low_hz: float = 0.1
    high_hz: float = 0.5
    sample_rate_hz: float = 50.0

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz < self.sample_rate_hz / 2:
            raise ValidationError(
                "band",
                f"need 0 < low < high < fs/2, got low={self.low_hz}, high={self.high_hz}, fs={self.sample_rate_hz}",
            )

    @property
    def min_samples(self) -> int:
        """Samples in one period of the low band edge."""
        return int(np.ceil(self.sample_rate_hz / self.low_hz))


@dataclass(frozen=True)
class FilteredSignals:
    x_a: np.ndarray
    x_p: np.ndarray
    source: Tuple[int, int]     # (antenna, subcarrier)


@dataclass(frozen=True)
class SpectralReport:
    modality: Modality
    f_star_hz: float
    q_spec: float
    resolution_hz: float


@dataclass(frozen=True)
class RespirationEstimate:
    rate_bpm: float
    chosen_modality: Modality
    amplitude: SpectralReport
    phase: SpectralReport
    peak_times: Tuple[float, ...]
    window: Tuple[float, float]
    signals: FilteredSignals
    band: BandConfig
    rate_source: str = "peaks"      # "peaks" or "spectrum"

    @property
    def reports(self) -> Dict[Modality, SpectralReport]:
        return {Modality.AMPLITUDE: self.amplitude, Modality.PHASE: self.phase}

    def to_dict(self) -> Dict[str, Any]:
        antenna, subcarrier = self.signals.source
        return {
            "rate_bpm": self.rate_bpm,
            "chosen_modality": self.chosen_modality.value,
            "q_amplitude": self.amplitude.q_spec,
            "q_phase": self.phase.q_spec,
            "f_star_amplitude_hz": self.amplitude.f_star_hz,
            "f_star_phase_hz": self.phase.f_star_hz,
            "window_s": list(self.window),
            "subcarrier": subcarrier,
            "antenna": antenna,
            "band": [self.band.low_hz, self.band.high_hz],
            "rate_source": self.rate_source,
            "peak_times_s": list(self.peak_times),
        }


def bandpass(series: np.ndarray, band: BandConfig) -> np.ndarray:
    """
    Zero-phase 4th-order Butterworth bandpass (forward-backward, second-order sections).

    Raises:
        InsufficientDataError: fewer samples than one period of `band.low_hz`.
    """
    x = np.asarray(series, dtype=np.float64)
    required = band.min_samples
    if x.ndim != 1 or x.size < required:
        raise InsufficientDataError("bandpass", f"{required} samples", x.size)
    sos = butter(FILTER_ORDER, [band.low_hz, band.high_hz], btype="bandpass", fs=band.sample_rate_hz, output="sos")
    return sosfiltfilt(sos, x, padtype="odd", padlen=min(x.size - 1, 3 * required))


def detect_peaks(
        series: np.ndarray,
        sample_rate_hz: float,
        min_distance_s: float = 2.0,
        min_prominence: Optional[float] = None,
) -> np.ndarray:
    """Peak times in seconds, at least `min_distance_s` apart; prominence defaults to 0.25 x std."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        return np.empty(0)
    if min_prominence is None:
        spread = float(np.std(x))
        if spread == 0.0:
            return np.empty(0)
        min_prominence = DEFAULT_PROMINENCE_FACTOR * spread
    distance = max(1, int(np.floor(min_distance_s * sample_rate_hz)))
    idx, _ = find_peaks(x, distance=distance, prominence=min_prominence)
    return idx / sample_rate_hz


def rate_from_peaks(peaks: Iterable[float]) -> Optional[float]:
    """Mean breathing rate in bpm over the peak span; None with fewer than 2 peaks."""
    t = np.asarray(list(peaks), dtype=np.float64)
    if t.size < 2:
        return None
    span = t[-1] - t[0]
    if span <= 0:
        return None
    return 60.0 * (t.size - 1) / span


def spectral_concentration(
        series: np.ndarray,
        band: BandConfig,
        modality: Modality = Modality.AMPLITUDE,
) -> SpectralReport:
    """
    Share of the in-band magnitude spectrum held by its strongest bin.

    Hann window, zero-padded to the next power of two >= 4 x the series length.
    A silent series reports q = 0 at the first in-band bin.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < band.min_samples:
        raise InsufficientDataError("spectral concentration", f"{band.min_samples} samples", x.size)
    nfft = 1 << int(np.ceil(np.log2(ZERO_PAD_FACTOR * x.size)))
    resolution = band.sample_rate_hz / nfft
    spectrum = np.abs(rfft((x - x.mean()) * get_window("hann", x.size), nfft))
    freqs = rfftfreq(nfft, 1.0 / band.sample_rate_hz)
    in_band = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    if not np.any(in_band):
        raise BandResolutionError(band.low_hz, band.high_hz, resolution)

    magnitudes = spectrum[in_band]
    band_freqs = freqs[in_band]
    total = float(magnitudes.sum())
    if total <= 0.0:
        return SpectralReport(modality, float(band_freqs[0]), 0.0, resolution)
    best = int(np.argmax(magnitudes))
    return SpectralReport(modality, float(band_freqs[best]), float(magnitudes[best] / total), resolution)


def stability_scores(features: FeatureTensors, band: BandConfig) -> np.ndarray:
    """In-band to total power of each mean-removed amplitude series; shape (antenna, subcarrier)."""
    amplitude = features.amplitude
    centred = amplitude - amplitude.mean(axis=-1, keepdims=True)
    power = np.abs(rfft(centred, axis=-1)) ** 2
    freqs = rfftfreq(amplitude.shape[-1], 1.0 / band.sample_rate_hz)
    in_band = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    total = power.sum(axis=-1)
    # floating-point residue of a constant series is not signal
    floor = 1e-20 * amplitude.shape[-1]
    scores = np.zeros_like(total)
    np.divide(power[..., in_band].sum(axis=-1), total, out=scores, where=total > floor)
    return scores


def select_subcarrier(
        features: FeatureTensors,
        band: BandConfig,
        exclude_antennas: Iterable[int] = (),
) -> Tuple[int, int]:
    """
    (antenna, subcarrier) with the highest stability score; ties go to the
    smallest index pair. Masked subcarriers and excluded antennas are skipped.
    """
    antennas = features.amplitude.shape[0]
    allowed = np.ones(antennas, dtype=bool)
    for i in exclude_antennas:
        if 0 <= i < antennas:
            allowed[i] = False
    valid = allowed[:, None] & features.usable[None, :]
    if not np.any(valid):
        raise NoUsableSubcarrierError(0)

    scores = np.where(valid, stability_scores(features, band), -np.inf)
    i, k = np.unravel_index(int(np.argmax(scores)), scores.shape)
    logger.debug(f"Selected antenna {i}, subcarrier {k} (stability {scores[i, k]:.3f})")
    return int(i), int(k)


def estimate_from_features(
        features: FeatureTensors,
        band: BandConfig,
        window: Tuple[float, float] = (0.0, 0.0),
        ref_antenna: int = 0,
) -> RespirationEstimate:
    """Run selection, filtering, modality choice and rate extraction on prepared features."""
    i, k = select_subcarrier(features, band, exclude_antennas=(ref_antenna,))
    signals = FilteredSignals(
        x_a=bandpass(features.amplitude[i, k], band),
        x_p=bandpass(features.phase[i, k], band),
        source=(i, k),
    )
    amplitude = spectral_concentration(signals.x_a, band, Modality.AMPLITUDE)
    phase = spectral_concentration(signals.x_p, band, Modality.PHASE)
    logger.debug(f"q_amplitude={amplitude.q_spec:.4f} q_phase={phase.q_spec:.4f}")

    # a tie keeps amplitude
    chosen = Modality.PHASE if phase.q_spec > amplitude.q_spec else Modality.AMPLITUDE
    report = phase if chosen is Modality.PHASE else amplitude
    series = signals.x_p if chosen is Modality.PHASE else signals.x_a

    peaks = detect_peaks(series, band.sample_rate_hz, min_distance_s=PEAK_SPACING_FACTOR / band.high_hz)
    rate = rate_from_peaks(peaks)
    lowest = 60.0 * (band.low_hz - report.resolution_hz)
    highest = 60.0 * (band.high_hz + report.resolution_hz)
    source = "peaks"
    if rate is None or not lowest <= rate <= highest:
        logger.warning(f"Peak-based rate unusable ({rate}); using spectral peak {report.f_star_hz:.3f} Hz")
        rate = 60.0 * report.f_star_hz
        source = "spectrum"

    return RespirationEstimate(
        rate_bpm=float(rate),
        chosen_modality=chosen,
        amplitude=amplitude,
        phase=phase,
        peak_times=tuple(float(t) + window[0] for t in peaks),
        window=(float(window[0]), float(window[1])),
        signals=signals,
        band=band,
        rate_source=source,
    )


def _band_for(rec: CsiRecording, band: Optional[BandConfig]) -> BandConfig:
    if band is None:
        return BandConfig(sample_rate_hz=rec.sample_rate_hz)
    if not np.isclose(band.sample_rate_hz, rec.sample_rate_hz):
        raise ValidationError(
            "band.sample_rate_hz", f"{band.sample_rate_hz} Hz does not match recording rate {rec.sample_rate_hz} Hz"
        )
    return band


def estimate_respiration(
        rec: CsiRecording,
        window: Optional[Tuple[float, float]] = None,
        band: Optional[BandConfig] = None,
        ref_antenna: int = 0,
        min_window_s: float = MIN_WINDOW_S,
) -> RespirationEstimate:
    """
    Estimate the breathing rate of `rec` over `window` (seconds, whole recording by default).

    Raises:
        ValidationError: window outside the recording or band/recording rate mismatch
        InsufficientDataError: window shorter than `min_window_s`
        NoUsableSubcarrierError: every candidate subcarrier is masked
    """
    band = _band_for(rec, band)
    start, end = (0.0, rec.duration) if window is None else (float(window[0]), float(window[1]))
    if start < 0 or end <= start or end > rec.duration + 1e-9:
        raise ValidationError("window", f"[{start}, {end}] outside recording of {rec.duration} s")
    if end - start < min_window_s - 1e-9:
        raise InsufficientDataError("respiration estimate", f"{min_window_s} s window", f"{end - start} s")

    segment = rec.frame_slice(start, end)
    mask = reference_mask(segment, ref_antenna)
    features = extract_features(normalize_antenna_ratio(segment, ref_antenna, mask))
    estimate = estimate_from_features(features, band, (start, end), ref_antenna)
    logger.info(
        f"Respiration {estimate.rate_bpm:.2f} bpm over [{start:.1f}, {end:.1f}] s "
        f"({estimate.chosen_modality.value}, {estimate.rate_source})"
    )
    return estimate


def track_respiration(
        rec: CsiRecording,
        window_s: float = MIN_WINDOW_S,
        hop_s: float = 10.0,
        band: Optional[BandConfig] = None,
        ref_antenna: int = 0,
        min_window_s: float = MIN_WINDOW_S,
) -> List[RespirationEstimate]:
    """
    Estimates over successive windows of `window_s` seconds, `hop_s` apart.

    Raises:
        InsufficientDataError: `window_s` below `min_window_s` or longer than the recording
    """
    if not hop_s > 0:
        raise ValidationError("hop_s", f"must be > 0, got {hop_s}")
    if window_s < min_window_s - 1e-9:
        raise InsufficientDataError("respiration tracking", f"{min_window_s} s window", f"{window_s} s")
    if window_s > rec.duration + 1e-9:
        raise InsufficientDataError("respiration tracking", f"{window_s} s recording", f"{rec.duration} s")
    estimates = []
    start = 0.0
    while start + window_s <= rec.duration + 1e-9:
        estimates.append(estimate_respiration(rec, (start, start + window_s), band, ref_antenna, min_window_s))
        start += hop_s
    return estimates
