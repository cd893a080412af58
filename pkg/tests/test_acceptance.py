"""
End-to-end checks on simulated batches. Slow; deselect with `-m "not slow"`.
"""
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import detrend, get_window

from src.cli import main
from src.csi.processing import extract_features, normalize_antenna_ratio
from src.csi.types import FeatureTensors
from src.movement.dataset import Dataset, iou, match_events, movement_corpus, samples_from_truth
from src.movement.detector import EnergyConfig, detect_events, short_term_energy
from src.nn.training import TrainConfig, evaluate, train
from src.respiration.estimator import (
    BandConfig,
    Modality,
    bandpass,
    estimate_from_features,
    estimate_respiration,
    select_subcarrier,
)
from src.sim.channel import simulate
from src.sim.config import InterfererSpec, Proximity
from tests.data.data_generator import FS, breathing_config, sinusoid, write_corpus

pytestmark = pytest.mark.slow

BAND = BandConfig(0.1, 0.5, FS)


def _rate_error(config) -> float:
    rec, truth = simulate(config)
    return abs(estimate_respiration(rec).rate_bpm - truth.respiration_rate_bpm)


# ── respiration ───────────────────────────────────────────────────────────────

def test_respiration_accuracy_over_100_recordings():
    rates = np.random.default_rng(2024).uniform(0.1, 0.5, 100)
    errors, relative = [], []
    for n, rate in enumerate(rates):
        rec, truth = simulate(breathing_config(rate_hz=float(rate), seed=1000 + n))
        error = abs(estimate_respiration(rec).rate_bpm - truth.respiration_rate_bpm)
        errors.append(error)
        relative.append(error / truth.respiration_rate_bpm)
    assert np.mean(np.array(relative) <= 0.10) >= 0.91
    assert np.mean(errors) <= 0.5


def _dominant_in_band(series: np.ndarray, fs: float) -> float:
    """Strongest bin of a detrended, Hann-windowed series inside the respiration band."""
    x = detrend(series) * get_window("hann", series.size)
    freqs = np.fft.rfftfreq(series.size, 1.0 / fs)
    band = (freqs >= BAND.low_hz) & (freqs <= BAND.high_hz)
    return float(freqs[band][np.argmax(np.abs(np.fft.rfft(x))[band])])


def test_offsets_cancel_and_ratio_phase_recovers_rate():
    ratio_hits = raw_hits = 0
    for seed in range(20):
        rate = 0.1 + 0.02 * seed
        rec, _ = simulate(breathing_config(rate_hz=rate, seed=seed))
        theta = np.random.default_rng(seed).uniform(0, 2 * np.pi, rec.frame_count)
        rotated = rec.with_data(rec.data * np.exp(1j * theta)[None, None, :])
        assert np.max(np.abs(normalize_antenna_ratio(rec).data - normalize_antenna_ratio(rotated).data)) <= 1e-12

        features = extract_features(normalize_antenna_ratio(rec))
        i, k = select_subcarrier(features, BAND, exclude_antennas=(0,))
        bin_hz = FS / rec.frame_count
        ratio_hits += abs(_dominant_in_band(features.phase[i, k], FS) - rate) <= bin_hz + 1e-12
        raw_phase = np.unwrap(np.angle(rec.data[i, k]))
        raw_hits += abs(_dominant_in_band(raw_phase, FS) - rate) <= bin_hz + 1e-12
    assert ratio_hits >= 19
    assert raw_hits < 19


def test_interferer_proximity_ordering():
    errors = {p: [] for p in Proximity}
    errors[None] = []
    for seed in range(20):
        base = breathing_config(rate_hz=0.1 + 0.02 * seed, seed=500 + seed)
        errors[None].append(_rate_error(base))
        for proximity in Proximity:
            cfg = replace(base, interferers=(InterfererSpec(proximity, 1.0, (0.0, base.duration)),))
            errors[proximity].append(_rate_error(cfg))
    median = {k: float(np.median(v)) for k, v in errors.items()}
    assert median[Proximity.NEAR_UE] > median[Proximity.INDOOR_FAR] >= median[Proximity.OUTDOOR]
    assert median[Proximity.NEAR_UE] > 2.0
    assert median[Proximity.OUTDOOR] <= 1.0
    assert abs(median[Proximity.OUTDOOR] - median[None]) <= 0.5


def test_clean_modality_is_chosen():
    correct = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        rate = rng.uniform(0.15, 0.45)
        clean = 1.0 + 0.1 * sinusoid(rate, 60.0) + 0.01 * rng.standard_normal((2, 4, 3000))
        noise = bandpass(rng.standard_normal(3000 * 8), BAND).reshape(2, 4, 3000)
        dirty = 0.1 * sinusoid(rate, 60.0) + 0.5 * noise / noise.std()
        corrupt_phase = bool(seed % 2)
        amplitude, phase = (clean, dirty) if corrupt_phase else (dirty + 10.0, clean - 1.0)
        estimate = estimate_from_features(FeatureTensors(amplitude, phase, 1.0 / FS), BAND, (0.0, 60.0))
        expected = Modality.AMPLITUDE if corrupt_phase else Modality.PHASE
        correct += estimate.chosen_modality is expected
    assert correct >= 90


# ── movement ──────────────────────────────────────────────────────────────────

def test_segmentation_recall_and_precision():
    found = missed = spurious = 0
    for config in movement_corpus(50, seed=77, locations=("gate",)):
        rec, truth = simulate(config)
        events = detect_events(rec, EnergyConfig(), (0.0, 10.0))
        truth_intervals = [interval for interval, _ in truth.movement_events]
        matches, lost, extra = match_events(truth_intervals, [e.interval for e in events])
        assert all(iou(truth_intervals[t], events[d].interval) >= 0.5 for t, d in matches)
        found += len(matches)
        missed += len(lost)
        spurious += len(extra)
    assert found / (found + missed) >= 0.95
    assert found / (found + spurious) >= 0.95


def test_energy_matches_double_loop():
    s = np.random.default_rng(8).exponential(size=600)
    w = 25
    naive = np.array([sum(s[j] for j in range(max(0, t - w + 1), t + 1)) / min(t + 1, w) for t in range(s.size)])
    energy = short_term_energy(s, w)
    assert np.max(np.abs(energy - naive)) <= 1e-12
    assert np.all(energy >= 0) and energy.max() <= s.max()


def test_movement_classification_over_904_samples():
    parts = []
    for config in movement_corpus(226, seed=904, subcarrier_count=200):
        rec, truth = simulate(config)
        parts.append(samples_from_truth(rec, truth, f"session_{config.seed}"))
    dataset = Dataset.from_traces(parts)
    assert len(dataset) == 904
    train_set, test_set = dataset.split(seed=0, test_count=340)
    params, _ = train(train_set, TrainConfig(seed=0), test_set)
    result = evaluate(params, test_set, group_by="location")
    assert result["accuracy"] >= 0.855
    assert len(result["per_group_accuracy"]) == 5
    assert min(result["per_group_accuracy"].values()) >= 0.80


# ── determinism ───────────────────────────────────────────────────────────────

def test_cli_train_is_byte_identical(tmp_path):
    traces = write_corpus(tmp_path / "corpus", movement_corpus(3, seed=1))
    log = str(tmp_path / "cli.log")
    config = str(Path(__file__).resolve().parent.parent / "config" / "srs_sense.ini")
    assert main(["-c", config, "--log-file", log, "dataset", *map(str, traces), "--out", str(tmp_path / "ds")]) == 0
    train_json = tmp_path / "train.json"
    train_json.write_text('{"epochs": 2, "batch_size": 8}')
    models = []
    for name in ("a.cnn", "b.cnn"):
        argv = ["-c", config, "--log-file", log, "train", str(tmp_path / "ds"), str(train_json),
                "--out-model", str(tmp_path / name), "--seed", "5", "--quiet"]
        assert main(argv) == 0
        models.append((tmp_path / name).read_bytes())
    assert models[0] == models[1]
