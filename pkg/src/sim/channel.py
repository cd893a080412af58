"""
Synthetic uplink CSI generator.

A recording is composed in a fixed order: static multipath plus the
respiration path, then movement bursts, interferers, receiver noise, AGC
gain steps and finally the per-frame transmitter/receiver offsets. Each
stage draws from its own child of the config seed, so adding a movement
never changes the static channel or the noise.
"""
import logging
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy.signal import butter, sosfiltfilt
from scipy.signal.windows import hann, tukey

from src.csi.types import CsiRecording
from src.exceptions import ValidationError
from src.sim.config import (
    PROXIMITY_GAIN,
    SIGNATURES,
    AgcSpec,
    InterfererSpec,
    MovementSpec,
    OffsetSpec,
    RespirationSpec,
    SimulationConfig,
)
from src.sim.truth import GroundTruth

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]

STATIC_PATHS = 6
MAX_STATIC_DELAY_S = 300e-9
STATIC_DELAY_DECAY_S = 100e-9
RESPIRATION_PATH_DB = -10.0
MOVEMENT_SCATTERERS = 3
DEFAULT_SPACING_HZ = 30e3

# Fixed child streams of the config seed; movements and interferers follow.
_STATIC, _RESPIRATION, _NOISE, _AGC, _OFFSETS = range(5)
_FIXED_STREAMS = 5


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def subcarrier_frequencies(count: int, spacing_hz: float = DEFAULT_SPACING_HZ) -> np.ndarray:
    """Baseband offsets of each subcarrier from the band centre."""
    return (np.arange(count) - (count - 1) / 2.0) * spacing_hz


def _delay_response(freqs: np.ndarray, delay_s: float) -> np.ndarray:
    return np.exp(-2j * np.pi * freqs * delay_s)


def _reference_rms(rec: CsiRecording) -> float:
    # median over frames so a burst already in the recording does not inflate the level
    per_frame = np.mean(np.abs(rec.data) ** 2, axis=(0, 1))
    return float(np.sqrt(np.median(per_frame)))


def static_channel(antennas: int, freqs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Time-invariant Rayleigh multipath H_s(i,k) with an exponential delay profile."""
    delays = np.sort(rng.uniform(0.0, MAX_STATIC_DELAY_S, STATIC_PATHS))
    power = np.exp(-delays / STATIC_DELAY_DECAY_S)
    power /= power.sum()
    gains = np.sqrt(power / 2.0)[:, None] * (
        rng.standard_normal((STATIC_PATHS, antennas)) + 1j * rng.standard_normal((STATIC_PATHS, antennas))
    )
    steering = np.exp(-2j * np.pi * np.outer(delays, freqs))
    return np.einsum("pi,pk->ik", gains, steering)


def respiration_modulation(
        spec: RespirationSpec,
        carrier_hz: float,
        times: np.ndarray,
        phase0: float = 0.0,
) -> np.ndarray:
    """
    Phase term of the chest reflection: 2*pi/lambda * d * sin(2*pi*f*t + phase0).
    Returns the unit-magnitude phasor per frame.
    """
    wavelength = 299_792_458.0 / carrier_hz
    swing = 2.0 * np.pi / wavelength * spec.chest_displacement
    return np.exp(1j * swing * np.sin(2.0 * np.pi * spec.rate_hz * times + phase0))


def _respiration_path(
        spec: RespirationSpec,
        antennas: int,
        freqs: np.ndarray,
        times: np.ndarray,
        carrier_hz: float,
        static_power: float,
        rng: np.random.Generator,
) -> np.ndarray:
    amplitude = np.sqrt(static_power * 10.0 ** (RESPIRATION_PATH_DB / 10.0))
    antenna_phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, antennas))
    delay = rng.uniform(20e-9, 100e-9)
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    spatial = amplitude * antenna_phase[:, None] * _delay_response(freqs, delay)[None, :]
    return spatial[:, :, None] * respiration_modulation(spec, carrier_hz, times, phase0)[None, None, :]


def _frame_range(rec: CsiRecording, start: float, end: float) -> Tuple[int, int]:
    first = max(int(round(start / rec.frame_interval)), 0)
    last = min(int(round(end / rec.frame_interval)), rec.frame_count)
    return first, last


def inject_movement(
        rec: CsiRecording,
        spec: MovementSpec,
        seed: Seed,
        existing: Iterable[MovementSpec] = (),
        reference_rms: Optional[float] = None,
        spacing_hz: float = DEFAULT_SPACING_HZ,
) -> CsiRecording:
    """
    Add a body-movement burst over [start, start + duration).

    The burst is a few moving scatterers confined to a contiguous subcarrier
    block, shaped by the class envelope. Zero intensity returns `rec` unchanged.
    Raises ValidationError when the interval leaves the recording or overlaps
    one of `existing`.
    """
    if not spec.duration > 0:
        raise ValidationError("movement.duration", "must be > 0")
    if spec.intensity < 0:
        raise ValidationError("movement.intensity", "must be >= 0")
    if spec.start < 0 or spec.end > rec.duration + 1e-9:
        raise ValidationError("movement", f"[{spec.start}, {spec.end}] outside recording of {rec.duration} s")
    for other in existing:
        if spec.start < other.end and other.start < spec.end:
            raise ValidationError("movement", f"[{spec.start}, {spec.end}] overlaps [{other.start}, {other.end}]")
    if spec.intensity == 0:
        return rec

    signature = SIGNATURES[spec.movement_class]
    rng = _rng(seed)
    first, last = _frame_range(rec, spec.start, spec.end)
    n = last - first
    if n < 2:
        return rec

    envelope = hann(n, sym=True) if signature.envelope == "hann" else tukey(n, 0.3)
    antennas, subcarriers = rec.antenna_count, rec.subcarrier_count
    width = min(subcarriers, max(1, int(round(signature.support * subcarriers))))
    k0 = int(rng.integers(0, subcarriers - width + 1))
    freqs = subcarrier_frequencies(subcarriers, spacing_hz)[k0:k0 + width]
    t = np.arange(n) * rec.frame_interval

    burst = np.zeros((antennas, width, n), dtype=np.complex128)
    for _ in range(MOVEMENT_SCATTERERS):
        speed = signature.speed_mps * rng.uniform(0.7, 1.3) * rng.choice((-1.0, 1.0))
        doppler = np.exp(1j * (2.0 * np.pi * 2.0 * speed * t / rec.wavelength + rng.uniform(0.0, 2.0 * np.pi)))
        spatial = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, antennas))[:, None] \
            * _delay_response(freqs, rng.uniform(10e-9, 80e-9))[None, :]
        burst += spatial[:, :, None] * doppler[None, None, :]

    level = _reference_rms(rec) if reference_rms is None else reference_rms
    burst *= signature.amplitude * spec.intensity * level / np.sqrt(MOVEMENT_SCATTERERS)
    burst *= envelope[None, None, :]

    data = rec.data.copy()
    data[:, k0:k0 + width, first:last] += burst
    logger.debug(f"Injected {spec.movement_class.value} at {spec.start:.2f} s on subcarriers {k0}..{k0 + width - 1}")
    return rec.with_data(data)


def _lowpass_process(n: int, bandwidth_hz: float, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS complex Gaussian process band-limited to `bandwidth_hz`."""
    white = rng.standard_normal((2, n))
    if n > 1 and bandwidth_hz < fs / 2.0:
        sos = butter(4, bandwidth_hz, btype="lowpass", fs=fs, output="sos")
        white = sosfiltfilt(sos, white, axis=-1, padlen=min(n - 1, 3 * (2 * len(sos) + 1)))
    process = white[0] + 1j * white[1]
    rms = np.sqrt(np.mean(np.abs(process) ** 2))
    return process / rms if rms > 0 else process


def inject_interferer(
        rec: CsiRecording,
        spec: InterfererSpec,
        seed: Seed,
        reference_rms: Optional[float] = None,
        spacing_hz: float = DEFAULT_SPACING_HZ,
) -> CsiRecording:
    """
    Add a moving non-target reflector inside `spec.active_interval`.
    Its strength is the proximity gain times `motion_amplitude`, relative to
    the respiration path. Zero motion returns `rec` unchanged.
    """
    start, end = spec.active_interval
    if not 0 <= start < end <= rec.duration + 1e-9:
        raise ValidationError("interferer.active_interval", f"[{start}, {end}] outside recording")
    if spec.motion_amplitude < 0:
        raise ValidationError("interferer.motion_amplitude", "must be >= 0")
    if spec.motion_amplitude == 0:
        return rec

    rng = _rng(seed)
    first, last = _frame_range(rec, start, end)
    if last <= first:
        return rec
    process = _lowpass_process(last - first, spec.bandwidth_hz, rec.sample_rate_hz, rng)

    level = _reference_rms(rec) if reference_rms is None else reference_rms
    amplitude = PROXIMITY_GAIN[spec.proximity] * spec.motion_amplitude * level \
        * 10.0 ** (RESPIRATION_PATH_DB / 20.0)
    freqs = subcarrier_frequencies(rec.subcarrier_count, spacing_hz)
    spatial = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, rec.antenna_count))[:, None] \
        * _delay_response(freqs, rng.uniform(10e-9, 150e-9))[None, :]

    data = rec.data.copy()
    data[:, :, first:last] += amplitude * spatial[:, :, None] * process[None, None, :]
    return rec.with_data(data)


def add_noise(rec: CsiRecording, snr_db: float, signal_power: float, seed: Seed) -> CsiRecording:
    """Complex white Gaussian noise at `snr_db` below `signal_power`."""
    rng = _rng(seed)
    sigma = np.sqrt(signal_power * 10.0 ** (-snr_db / 10.0) / 2.0)
    noise = sigma * (rng.standard_normal(rec.data.shape) + 1j * rng.standard_normal(rec.data.shape))
    return rec.with_data(rec.data + noise)


def apply_agc(rec: CsiRecording, spec: AgcSpec, seed: Seed) -> CsiRecording:
    """Piecewise-constant real gain common to all antennas and subcarriers."""
    if not spec.enabled or spec.step_db_std == 0:
        return rec
    rng = _rng(seed)
    hold = max(1, int(round(spec.hold_s / rec.frame_interval)))
    blocks = -(-rec.frame_count // hold)
    gain_db = rng.normal(0.0, spec.step_db_std, blocks)
    gain = np.repeat(10.0 ** (gain_db / 20.0), hold)[:rec.frame_count]
    return rec.with_data(rec.data * gain[None, None, :])


def apply_frame_offsets(clean: CsiRecording, offsets: OffsetSpec, seed: Seed) -> CsiRecording:
    """
    Apply per-frame phase, CFO rotation and STO phase slope. Every factor is
    identical on all antennas, so antenna ratios are unaffected. With all
    terms zero the input is returned as is.
    """
    if not offsets.active:
        return clean
    rng = _rng(seed)
    t = clean.times()
    common = np.zeros(clean.frame_count)
    if offsets.per_frame_phase:
        common += rng.uniform(0.0, 2.0 * np.pi, clean.frame_count)
    if offsets.cfo_hz:
        common += 2.0 * np.pi * offsets.cfo_hz * t
    data = clean.data * np.exp(1j * common)[None, None, :]
    if offsets.sto_slope_rad_per_subcarrier:
        timing = rng.uniform(-1.0, 1.0, clean.frame_count)
        k = np.arange(clean.subcarrier_count)
        slope = offsets.sto_slope_rad_per_subcarrier * k[:, None] * timing[None, :]
        data = data * np.exp(1j * slope)[None, :, :]
    return clean.with_data(data)


def simulate(config: SimulationConfig) -> Tuple[CsiRecording, GroundTruth]:
    """Generate a recording and its ground truth; deterministic in `config.seed`."""
    config.validate()
    movements = sorted(config.movements, key=lambda m: m.start)
    streams = np.random.SeedSequence(config.seed).spawn(
        _FIXED_STREAMS + len(movements) + len(config.interferers)
    )
    freqs = subcarrier_frequencies(config.subcarrier_count, config.subcarrier_spacing_hz)
    times = np.arange(config.frame_count) * config.frame_interval

    static = static_channel(config.antenna_count, freqs, _rng(streams[_STATIC]))
    static_power = float(np.mean(np.abs(static) ** 2))
    data = np.repeat(static[:, :, None], config.frame_count, axis=2)
    breathing = config.respiration.enabled and config.respiration.chest_displacement > 0
    if breathing:
        data = data + _respiration_path(
            config.respiration, config.antenna_count, freqs, times,
            config.carrier_hz, static_power, _rng(streams[_RESPIRATION]),
        )
    rec = CsiRecording(data, config.frame_interval, config.carrier_hz)

    level = np.sqrt(static_power)
    injected = []
    for n, spec in enumerate(movements):
        rec = inject_movement(rec, spec, streams[_FIXED_STREAMS + n], injected, level, config.subcarrier_spacing_hz)
        injected.append(spec)
    for n, spec in enumerate(config.interferers):
        stream = streams[_FIXED_STREAMS + len(movements) + n]
        rec = inject_interferer(rec, spec, stream, level, config.subcarrier_spacing_hz)

    if config.noise_snr_db is not None:
        rec = add_noise(rec, config.noise_snr_db, static_power, streams[_NOISE])
    rec = apply_agc(rec, config.agc, streams[_AGC])
    rec = apply_frame_offsets(rec, config.offsets, streams[_OFFSETS])

    truth = GroundTruth(
        respiration_rate_bpm=config.respiration.rate_bpm if config.respiration.enabled else None,
        movement_events=tuple(((m.start, m.end), m.movement_class) for m in movements if m.intensity > 0),
        interferer_intervals=tuple(
            (i.active_interval, i.proximity) for i in config.interferers if i.motion_amplitude > 0
        ),
        location=config.location,
        seed=config.seed,
    )
    logger.info(
        f"Simulated {config.antenna_count}x{config.subcarrier_count}x{config.frame_count} CSI "
        f"({len(truth.movement_events)} movements, {len(truth.interferer_intervals)} interferers)"
    )
    return rec, truth
