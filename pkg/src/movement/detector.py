"""
Movement energy statistics, event segmentation and classifier sample construction.

S(t) is the total frame-to-frame amplitude change; index t describes the
change between frames t and t+1. E(t) is its trailing W-frame mean.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.csi.types import CsiRecording
from src.exceptions import CalibrationError, ContractError, ValidationError
from src.movement.classes import MovementClass

logger = logging.getLogger(__name__)

MIN_BASELINE_S = 5.0
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class ZScoreParams:
    mu: float
    sigma: float
    epsilon: float = DEFAULT_EPSILON


@dataclass(frozen=True)
class EnergyConfig:
    window_w: int = 25
    threshold_k: float = 3.0
    min_event_s: float = 0.4
    merge_gap_s: float = 0.3

    def __post_init__(self):
        if self.window_w < 1:
            raise ValidationError("window_w", f"must be >= 1, got {self.window_w}")
        if not self.threshold_k > 0:
            raise ValidationError("threshold_k", f"must be > 0, got {self.threshold_k}")
        if self.min_event_s < 0:
            raise ValidationError("min_event_s", "must be >= 0")
        if self.merge_gap_s < 0:
            raise ValidationError("merge_gap_s", "must be >= 0")


@dataclass(frozen=True)
class MovementEvent:
    interval: Tuple[float, float]
    peak_energy: float
    mean_energy: float
    label: Optional[MovementClass] = None

    @property
    def start(self) -> float:
        return self.interval[0]

    @property
    def end(self) -> float:
        return self.interval[1]

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass(frozen=True)
class ClassifierSample:
    tensor: np.ndarray          # float32 (antenna, freq_bin, time_step)
    label: Optional[MovementClass] = None


def zscore(amplitude: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> Tuple[np.ndarray, ZScoreParams]:
    """(A - mu) / (sigma + epsilon) with mu, sigma over the whole tensor."""
    a = np.asarray(amplitude, dtype=np.float64)
    if a.size == 0:
        raise ValidationError("amplitude", "tensor is empty")
    if not epsilon > 0:
        raise ValidationError("epsilon", f"must be > 0, got {epsilon}")
    mu = float(a.mean())
    sigma = float(a.std())
    return (a - mu) / (sigma + epsilon), ZScoreParams(mu, sigma, epsilon)


def amplitude_delta(amplitude: np.ndarray) -> np.ndarray:
    """S(t) = sum over antennas and subcarriers of |A(t+1) - A(t)|."""
    a = np.asarray(amplitude, dtype=np.float64)
    if a.ndim != 3:
        raise ContractError("amplitude_delta", "(antenna, subcarrier, frame) tensor", a.shape)
    if a.shape[-1] < 2:
        raise ValidationError("frame_count", f"must be >= 2, got {a.shape[-1]}")
    return np.abs(np.diff(a, axis=-1)).sum(axis=(0, 1))


def short_term_energy(delta: np.ndarray, window_w: int) -> np.ndarray:
    """Trailing mean of the last `window_w` values; the window shrinks at the start."""
    if window_w < 1:
        raise ValidationError("window_w", f"must be >= 1, got {window_w}")
    s = np.asarray(delta, dtype=np.float64)
    if s.size == 0:
        return s.copy()
    padded = np.concatenate([np.zeros(window_w - 1), s])
    sums = sliding_window_view(padded, window_w).sum(axis=-1)
    counts = np.minimum(np.arange(1, s.size + 1), window_w)
    return sums / counts


def suppress_agc(amplitude: np.ndarray) -> np.ndarray:
    """Divide each frame by its median amplitude, rescaled by the global median."""
    a = np.asarray(amplitude, dtype=np.float64)
    per_frame = np.median(a, axis=(0, 1))
    overall = float(np.median(a))
    scale = np.divide(overall, per_frame, out=np.ones_like(per_frame), where=per_frame > 0)
    return a * scale[None, None, :]


def _runs(active: np.ndarray) -> List[Tuple[int, int]]:
    """Inclusive (first, last) index pairs of True runs."""
    edges = np.diff(np.concatenate([[0], active.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def energy_threshold(
        energy: np.ndarray,
        config: EnergyConfig,
        baseline_interval: Tuple[float, float],
        frame_interval: float,
) -> float:
    """mu + k * sigma of E over the motion-free baseline."""
    b0, b1 = baseline_interval
    if b1 - b0 < MIN_BASELINE_S:
        raise CalibrationError(MIN_BASELINE_S, b1 - b0)
    times = (np.arange(energy.size) + 1) * frame_interval
    base = energy[(times >= b0) & (times < b1)]
    covered = base.size * frame_interval
    if covered < MIN_BASELINE_S - frame_interval:
        raise CalibrationError(MIN_BASELINE_S, round(covered, 3))
    return float(base.mean() + config.threshold_k * base.std())


def segment_events(
        energy: np.ndarray,
        config: EnergyConfig,
        baseline_interval: Tuple[float, float],
        frame_interval: float = 0.020,
) -> List[MovementEvent]:
    """
    Movement events from E(t): spans above the baseline threshold, with the
    trailing-window lag removed from each end, gaps shorter than merge_gap_s
    closed and spans shorter than min_event_s dropped.

    Raises:
        CalibrationError: baseline shorter than 5 s or outside the series.
    """
    e = np.asarray(energy, dtype=np.float64)
    threshold = energy_threshold(e, config, baseline_interval, frame_interval)
    logger.debug(f"Energy threshold {threshold:.4g}")

    spans = []
    for first, last in _runs(e > threshold):
        last -= config.window_w - 1
        if last >= first:
            spans.append([first, last])

    merged: List[List[int]] = []
    for first, last in spans:
        if merged and (first - merged[-1][1] - 1) * frame_interval < config.merge_gap_s:
            merged[-1][1] = last
        else:
            merged.append([first, last])

    events = []
    for first, last in merged:
        start, end = first * frame_interval, (last + 1) * frame_interval
        if end - start < config.min_event_s:
            continue
        chunk = e[first:last + 1]
        events.append(MovementEvent((start, end), float(chunk.max()), float(chunk.mean())))
    return events


def detect_events(
        rec: CsiRecording,
        config: EnergyConfig,
        baseline_interval: Tuple[float, float],
        agc_correction: bool = False,
) -> List[MovementEvent]:
    """Amplitude -> S(t) -> E(t) -> events for a whole recording."""
    amplitude = np.abs(rec.data)
    if agc_correction:
        amplitude = suppress_agc(amplitude)
    energy = short_term_energy(amplitude_delta(amplitude), config.window_w)
    events = segment_events(energy, config, baseline_interval, rec.frame_interval)
    logger.info(f"Detected {len(events)} movement events in {rec.duration:.1f} s")
    return events


def pooling_weights(subcarriers: int, bins: int) -> np.ndarray:
    """(subcarriers, bins) matrix averaging contiguous, possibly fractional, blocks."""
    if bins < 1:
        raise ValidationError("freq_bins", f"must be >= 1, got {bins}")
    width = subcarriers / bins
    edges = np.arange(bins + 1) * width
    k = np.arange(subcarriers, dtype=np.float64)[:, None]
    overlap = np.clip(np.minimum(k + 1, edges[None, 1:]) - np.maximum(k, edges[None, :-1]), 0.0, None)
    return overlap / width


def pool_subcarriers(tensor: np.ndarray, bins: int) -> np.ndarray:
    """Average-pool the subcarrier axis of an (antenna, subcarrier, time) tensor to `bins`."""
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3:
        raise ContractError("pool_subcarriers", "(antenna, subcarrier, time) tensor", t.shape)
    return np.einsum("ikt,kf->ift", t, pooling_weights(t.shape[1], bins))


def make_samples(
        rec: CsiRecording,
        events: Sequence[MovementEvent],
        freq_bins: int = 64,
        time_steps: int = 128,
        agc_correction: bool = False,
) -> List[ClassifierSample]:
    """
    One fixed-shape sample per event, sharing a single whole-recording z-score.
    Windows are centred on the event midpoint; frames past either edge repeat
    the edge frame.
    """
    if time_steps < 1:
        raise ValidationError("time_steps", f"must be >= 1, got {time_steps}")
    amplitude = np.abs(rec.data)
    if agc_correction:
        amplitude = suppress_agc(amplitude)
    normalized, _ = zscore(amplitude)

    samples = []
    for event in events:
        if event.start < 0 or event.end > rec.duration + 1e-9 or event.end <= event.start:
            raise ValidationError("event", f"[{event.start}, {event.end}] outside recording of {rec.duration} s")
        centre = int(round((event.start + event.end) / 2.0 / rec.frame_interval))
        frames = np.clip(np.arange(centre - time_steps // 2, centre - time_steps // 2 + time_steps),
                         0, rec.frame_count - 1)
        pooled = pool_subcarriers(normalized[:, :, frames], freq_bins)
        samples.append(ClassifierSample(pooled.astype(np.float32), event.label))
    return samples


def make_sample(
        rec: CsiRecording,
        event: MovementEvent,
        freq_bins: int = 64,
        time_steps: int = 128,
        agc_correction: bool = False,
) -> ClassifierSample:
    return make_samples(rec, [event], freq_bins, time_steps, agc_correction)[0]
