"""
Classifier datasets on disk.

A dataset directory holds one binary file per sample plus `manifest.json`:

    sample file:  shape u16 x 3 (channels, freq_bins, time_steps) | float32 payload, little-endian
    manifest:     {"version", "shape", "samples": [{file, label, source_trace, interval_s, location}],
                   "missed": [...], "unmatched": [...]}
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.artifacts import atomic_write_bytes, atomic_write_json
from src.csi.types import CsiRecording
from src.exceptions import ContractError, CorruptTraceError, InsufficientDataError, ValidationError
from src.movement.classes import CLASS_COUNT, MovementClass
from src.movement.detector import EnergyConfig, MovementEvent, detect_events, make_samples
from src.sim.config import LOCATION_SNR_DB, OffsetSpec, RespirationSpec, SimulationConfig, movement_session
from src.sim.truth import GroundTruth

logger = logging.getLogger(__name__)

SAMPLE_HEADER = struct.Struct("<HHH")
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
MATCH_IOU = 0.5

Interval = Tuple[float, float]


def encode_sample(tensor: np.ndarray) -> bytes:
    t = np.asarray(tensor)
    if t.ndim != 3 or any(d > 0xFFFF for d in t.shape):
        raise ContractError("encode_sample", "(channels, freq_bins, time_steps) with dims < 65536", t.shape)
    return SAMPLE_HEADER.pack(*t.shape) + np.ascontiguousarray(t, dtype="<f4").tobytes()


def decode_sample(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < SAMPLE_HEADER.size:
        raise CorruptTraceError(source, "sample header truncated")
    shape = SAMPLE_HEADER.unpack_from(raw)
    payload = raw[SAMPLE_HEADER.size:]
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise CorruptTraceError(source, f"payload is {len(payload)} bytes, shape {shape} implies {expected}")
    tensor = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if not np.all(np.isfinite(tensor)):
        raise CorruptTraceError(source, "sample contains NaN or Inf")
    return tensor


def read_sample(path: Union[str, Path]) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise CorruptTraceError(str(p), "file not found")
    return decode_sample(p.read_bytes(), str(p))


def iou(a: Interval, b: Interval) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


def match_events(
        truth: Sequence[Interval],
        detections: Sequence[Interval],
        min_iou: float = MATCH_IOU,
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """
    Greedy one-to-one matching by descending IoU.
    Returns (matches as (truth_idx, detection_idx), missed truth indices, unmatched detection indices).
    """
    pairs = sorted(
        ((iou(t, d), ti, di) for ti, t in enumerate(truth) for di, d in enumerate(detections)),
        key=lambda p: (-p[0], p[1], p[2]),
    )
    used_t, used_d, matches = set(), set(), []
    for score, ti, di in pairs:
        if score < min_iou:
            break
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        matches.append((ti, di))
    missed = [i for i in range(len(truth)) if i not in used_t]
    unmatched = [i for i in range(len(detections)) if i not in used_d]
    return sorted(matches), missed, unmatched


@dataclass(frozen=True)
class DatasetEntry:
    file: str
    label: Optional[MovementClass]
    source_trace: str
    interval_s: Interval
    location: str = "default"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "file": self.file,
            "label": self.label.value if self.label else None,
            "source_trace": self.source_trace,
            "interval_s": list(self.interval_s),
            "location": self.location,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "DatasetEntry":
        label = doc.get("label")
        return cls(
            file=doc["file"],
            label=MovementClass(label) if label else None,
            source_trace=doc.get("source_trace", ""),
            interval_s=(float(doc["interval_s"][0]), float(doc["interval_s"][1])),
            location=doc.get("location", "default"),
        )


@dataclass
class TraceSamples:
    """Samples cut from one trace, plus the bookkeeping the manifest reports."""
    source_trace: str
    location: str
    tensors: List[np.ndarray] = field(default_factory=list)
    entries: List[DatasetEntry] = field(default_factory=list)
    missed: List[Dict[str, Any]] = field(default_factory=list)
    unmatched: List[Dict[str, Any]] = field(default_factory=list)


def samples_from_detections(
        rec: CsiRecording,
        truth: GroundTruth,
        source_trace: str,
        energy: EnergyConfig,
        baseline_interval: Interval,
        freq_bins: int = 64,
        time_steps: int = 128,
        agc_correction: bool = False,
) -> TraceSamples:
    """
    Detect events, match them to truth by IoU and cut one labelled sample per
    matched truth event; the rest are reported as missed or unmatched.
    """
    detections = detect_events(rec, energy, baseline_interval, agc_correction)
    truth_intervals = [interval for interval, _ in truth.movement_events]
    matches, missed, unmatched = match_events(truth_intervals, [d.interval for d in detections])
    labelled = [
        MovementEvent(detections[di].interval, detections[di].peak_energy, detections[di].mean_energy,
                      truth.movement_events[ti][1])
        for ti, di in matches
    ]
    out = TraceSamples(source_trace, truth.location)
    for sample, event in zip(make_samples(rec, labelled, freq_bins, time_steps, agc_correction), labelled):
        out.tensors.append(sample.tensor)
        out.entries.append(DatasetEntry("", event.label, source_trace, event.interval, truth.location))
    for ti in missed:
        interval, cls = truth.movement_events[ti]
        logger.warning(f"{source_trace}: missed {cls.value} at [{interval[0]:.2f}, {interval[1]:.2f}] s")
        out.missed.append({"source_trace": source_trace, "interval_s": list(interval), "label": cls.value})
    for di in unmatched:
        out.unmatched.append({"source_trace": source_trace, "interval_s": list(detections[di].interval)})
    return out


def samples_from_truth(
        rec: CsiRecording,
        truth: GroundTruth,
        source_trace: str = "",
        freq_bins: int = 64,
        time_steps: int = 128,
        agc_correction: bool = False,
) -> TraceSamples:
    """One labelled sample per truth movement, cut at the truth interval."""
    events = [MovementEvent(interval, 0.0, 0.0, cls) for interval, cls in truth.movement_events]
    out = TraceSamples(source_trace, truth.location)
    for sample, event in zip(make_samples(rec, events, freq_bins, time_steps, agc_correction), events):
        out.tensors.append(sample.tensor)
        out.entries.append(DatasetEntry("", event.label, source_trace, event.interval, truth.location))
    return out


def stratified_split(
        labels: Sequence[Any],
        groups: Sequence[Any],
        test_count: int,
        seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Train/test index arrays with exactly `test_count` test samples, allocated to
    (label, group) strata by largest remainder and drawn with a seeded shuffle.
    """
    n = len(labels)
    if not 0 < test_count < n:
        raise ValidationError("test_count", f"must be in 1..{n - 1}, got {test_count}")
    strata: Dict[Tuple[str, str], List[int]] = {}
    for i, key in enumerate(zip(labels, groups)):
        strata.setdefault((str(key[0]), str(key[1])), []).append(i)
    keys = sorted(strata)
    exact = np.array([test_count * len(strata[k]) / n for k in keys])
    quota = np.floor(exact).astype(int)
    remainder = test_count - int(quota.sum())
    # stable sort keeps stratum order among equal fractions
    for j in np.argsort(-(exact - quota), kind="stable")[:remainder]:
        quota[j] += 1

    rng = np.random.default_rng(seed)
    test: List[int] = []
    for key, q in zip(keys, quota):
        members = rng.permutation(strata[key])
        test.extend(int(i) for i in members[:q])
    test_idx = np.array(sorted(test), dtype=int)
    train_idx = np.setdiff1d(np.arange(n), test_idx)
    return train_idx, test_idx


class Dataset:
    """Sample tensors (N, C, F, T) with their manifest entries."""

    def __init__(self, tensors: np.ndarray, entries: Sequence[DatasetEntry]):
        tensors = np.asarray(tensors, dtype=np.float32)
        if tensors.ndim != 4:
            raise ContractError("Dataset", "(samples, channels, freq_bins, time_steps)", tensors.shape)
        if len(entries) != tensors.shape[0]:
            raise ContractError("Dataset", f"{tensors.shape[0]} entries", len(entries))
        self.tensors = tensors
        self.entries = list(entries)

    @classmethod
    def from_arrays(
            cls,
            tensors: np.ndarray,
            labels: Sequence[int],
            locations: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        locations = locations if locations is not None else ["default"] * len(labels)
        entries = [
            DatasetEntry(f"sample_{n:05d}.bin", MovementClass.from_index(int(y)), "", (0.0, 0.0), loc)
            for n, (y, loc) in enumerate(zip(labels, locations))
        ]
        return cls(tensors, entries)

    @classmethod
    def from_traces(cls, parts: Iterable[TraceSamples]) -> "Dataset":
        tensors, entries = [], []
        for part in parts:
            tensors.extend(part.tensors)
            entries.extend(part.entries)
        if not tensors:
            raise InsufficientDataError("dataset", "1 sample", 0)
        if len({t.shape for t in tensors}) != 1:
            raise ContractError("Dataset", "one sample shape", sorted({t.shape for t in tensors}))
        named = [
            DatasetEntry(f"sample_{n:05d}.bin", e.label, e.source_trace, e.interval_s, e.location)
            for n, e in enumerate(entries)
        ]
        return cls(np.stack(tensors), named)

    def __len__(self) -> int:
        return self.tensors.shape[0]

    @property
    def sample_shape(self) -> Tuple[int, int, int]:
        return tuple(self.tensors.shape[1:])

    @property
    def labels(self) -> np.ndarray:
        if any(e.label is None for e in self.entries):
            raise ValidationError("labels", "dataset contains unlabelled samples")
        return np.array([e.label.index for e in self.entries], dtype=int)

    def column(self, name: str) -> List[Any]:
        """Manifest field per sample, e.g. "location" or "label"."""
        if name not in DatasetEntry.__dataclass_fields__:
            raise ValidationError("group_by", f"unknown manifest field '{name}'")
        values = [getattr(e, name) for e in self.entries]
        return [v.value if isinstance(v, MovementClass) else v for v in values]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.tensors[idx], [self.entries[i] for i in idx])

    def split(
            self,
            test_fraction: float = 340 / 904,
            seed: int = 0,
            test_count: Optional[int] = None,
    ) -> Tuple["Dataset", "Dataset"]:
        """Stratified by (label, location); `test_count` overrides the fraction."""
        count = int(round(test_fraction * len(self))) if test_count is None else test_count
        train_idx, test_idx = stratified_split(self.labels, self.column("location"), count, seed)
        return self.subset(train_idx), self.subset(test_idx)

    def save(
            self,
            root: Union[str, Path],
            missed: Sequence[Dict[str, Any]] = (),
            unmatched: Sequence[Dict[str, Any]] = (),
    ) -> Path:
        root = Path(root)
        for tensor, entry in zip(self.tensors, self.entries):
            atomic_write_bytes(root / entry.file, encode_sample(tensor))
        manifest = {
            "version": MANIFEST_VERSION,
            "shape": list(self.sample_shape),
            "samples": [e.to_dict() for e in self.entries],
            "missed": list(missed),
            "unmatched": list(unmatched),
        }
        return atomic_write_json(root / MANIFEST_NAME, manifest)

    @classmethod
    def load(cls, root: Union[str, Path]) -> "Dataset":
        root = Path(root)
        manifest_file = root / MANIFEST_NAME
        if not manifest_file.is_file():
            raise CorruptTraceError(str(manifest_file), "dataset manifest not found")
        try:
            doc = json.loads(manifest_file.read_text(encoding="utf-8"))
            entries = [DatasetEntry.from_dict(d) for d in doc["samples"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as e:
            raise CorruptTraceError(str(manifest_file), f"malformed manifest: {e}")
        if not entries:
            raise InsufficientDataError("dataset", "1 sample", 0)
        tensors = [read_sample(root / e.file) for e in entries]
        if len({t.shape for t in tensors}) != 1:
            raise CorruptTraceError(str(root), "samples have differing shapes")
        return cls(np.stack(tensors), entries)


def movement_corpus(
        sessions: int,
        seed: int,
        locations: Sequence[str] = tuple(LOCATION_SNR_DB),
        **overrides,
) -> List[SimulationConfig]:
    """
    Simulation configs for `sessions` recordings, each holding all four movement
    classes in shuffled order, cycling through the SNR tiers of `locations`.
    """
    unknown = [loc for loc in locations if loc not in LOCATION_SNR_DB]
    if unknown:
        raise ValidationError("locations", f"unknown location(s) {unknown}")
    rng = np.random.default_rng(seed)
    configs = []
    for n in range(sessions):
        location = locations[n % len(locations)]
        order = [MovementClass.from_index(int(i)) for i in rng.permutation(CLASS_COUNT)]
        configs.append(movement_session(
            order,
            seed=int(rng.integers(0, 2 ** 63)),
            location=location,
            noise_snr_db=LOCATION_SNR_DB[location],
            respiration=RespirationSpec(rate_hz=float(rng.uniform(0.1, 0.5))),
            offsets=OffsetSpec(per_frame_phase=True),
            **overrides,
        ))
    return configs
