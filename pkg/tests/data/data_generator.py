"""
Synthetic inputs shared by the test suites.

Run directly to write a small demo corpus (traces + truth sidecars) under
tests/data/corpus/:

    python3 -m tests.data.data_generator
"""
import json
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.csi.trace_io import encode_trace
from src.csi.types import CsiRecording
from src.movement.classes import CLASS_COUNT, MovementClass
from src.movement.dataset import Dataset
from src.sim.channel import simulate
from src.sim.config import OffsetSpec, RespirationSpec, SimulationConfig, movement_session
from src.sim.truth import truth_sidecar_path

FS = 50.0


def sinusoid(freq_hz: float, duration_s: float, fs: float = FS, amplitude: float = 1.0, phase: float = 0.0) -> np.ndarray:
    t = np.arange(int(round(duration_s * fs))) / fs
    return amplitude * np.sin(2.0 * np.pi * freq_hz * t + phase)


def static_recording(antennas: int = 2, subcarriers: int = 8, frames: int = 50, seed: int = 0) -> CsiRecording:
    """Frame-constant recording with random complex gains."""
    rng = np.random.default_rng(seed)
    gains = rng.standard_normal((antennas, subcarriers)) + 1j * rng.standard_normal((antennas, subcarriers))
    return CsiRecording(np.repeat(gains[:, :, None], frames, axis=2))


def breathing_config(
        rate_hz: float = 0.25,
        seed: int = 1,
        subcarriers: int = 200,
        snr_db: Optional[float] = 20.0,
        duration: float = 60.0,
        **overrides,
) -> SimulationConfig:
    """60 s respiration-only recording with offsets on, the acceptance default."""
    return SimulationConfig(
        duration=duration,
        subcarrier_count=subcarriers,
        respiration=RespirationSpec(rate_hz=rate_hz),
        offsets=OffsetSpec(per_frame_phase=True, cfo_hz=0.7, sto_slope_rad_per_subcarrier=0.002),
        noise_snr_db=snr_db,
        seed=seed,
        **overrides,
    ).validate()


def three_movement_config(seed: int = 7, subcarriers: int = 800, snr_db: Optional[float] = 20.0, **overrides):
    """Body turn, arm move and leg move, 4.5 s apart after a 10 s quiet baseline."""
    return movement_session(
        [MovementClass.BODY_TURN, MovementClass.ARM_MOVE, MovementClass.LEG_MOVE],
        subcarrier_count=subcarriers,
        noise_snr_db=snr_db,
        seed=seed,
        **overrides,
    )


def separable_dataset(
        per_class: Sequence[int],
        seed: int = 0,
        shape: Tuple[int, int, int] = (4, 8, 16),
        offset: float = 3.0,
        noise: float = 0.5,
        locations: Optional[Sequence[str]] = None,
) -> Dataset:
    """
    Class c lifts channel (c mod C) by `offset` over Gaussian noise, so the
    classes are linearly separable by channel means.
    """
    rng = np.random.default_rng(seed)
    tensors, labels = [], []
    for c, count in enumerate(per_class):
        x = rng.normal(0.0, noise, (count,) + tuple(shape))
        x[:, c % shape[0]] += offset
        tensors.append(x)
        labels.extend([c] * count)
    locs = None
    if locations is not None:
        locs = [locations[n % len(locations)] for n in range(len(labels))]
    return Dataset.from_arrays(np.concatenate(tensors).astype(np.float32), labels, locs)


def balanced_counts(total: int) -> List[int]:
    base, extra = divmod(total, CLASS_COUNT)
    return [base + (1 if c < extra else 0) for c in range(CLASS_COUNT)]


def write_trace(path: Path, config: SimulationConfig) -> Path:
    """Simulate `config` and write the trace plus its truth sidecar."""
    rec, truth = simulate(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_trace(rec))
    truth_sidecar_path(path).write_text(json.dumps(truth.to_dict()), encoding="utf-8")
    return path


def write_corpus(root: Path, configs: Sequence[SimulationConfig]) -> List[Path]:
    return [write_trace(root / f"trace_{n:03d}.csi", cfg) for n, cfg in enumerate(configs)]


if __name__ == "__main__":
    corpus = Path(__file__).resolve().parent / "corpus"
    write_corpus(corpus, [three_movement_config(seed=s) for s in range(5)])
    write_trace(corpus / "breathing.csi", breathing_config())
