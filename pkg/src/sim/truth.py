import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from src.exceptions import CorruptTraceError
from src.movement.classes import MovementClass
from src.sim.config import Proximity

Interval = Tuple[float, float]

# Bit generator behind every simulated stream; recorded in the truth sidecar.
RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class GroundTruth:
    """Labels known to the simulator for one recording."""
    respiration_rate_bpm: Optional[float]
    movement_events: Tuple[Tuple[Interval, MovementClass], ...] = ()
    interferer_intervals: Tuple[Tuple[Interval, Proximity], ...] = ()
    location: str = "default"
    seed: int = 0
    rng: str = RNG_NAME

    def to_dict(self) -> Dict[str, Any]:
        return {
            "respiration_rate_bpm": self.respiration_rate_bpm,
            "movement_events": [
                {"interval_s": list(interval), "class": cls.value} for interval, cls in self.movement_events
            ],
            "interferer_intervals": [
                {"interval_s": list(interval), "proximity": p.value} for interval, p in self.interferer_intervals
            ],
            "location": self.location,
            "seed": self.seed,
            "rng": self.rng,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], source: str = "<truth>") -> "GroundTruth":
        try:
            return cls(
                respiration_rate_bpm=doc["respiration_rate_bpm"],
                movement_events=tuple(
                    ((float(e["interval_s"][0]), float(e["interval_s"][1])), MovementClass(e["class"]))
                    for e in doc.get("movement_events", [])
                ),
                interferer_intervals=tuple(
                    ((float(e["interval_s"][0]), float(e["interval_s"][1])), Proximity(e["proximity"]))
                    for e in doc.get("interferer_intervals", [])
                ),
                location=doc.get("location", "default"),
                seed=int(doc.get("seed", 0)),
                rng=doc.get("rng", RNG_NAME),
            )
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise CorruptTraceError(source, f"malformed truth sidecar: {e}")


def truth_sidecar_path(trace: Union[str, Path]) -> Path:
    """`night.csi` -> `night.truth.json`."""
    return Path(trace).with_suffix(".truth.json")


def read_truth(trace: Union[str, Path]) -> GroundTruth:
    path = truth_sidecar_path(trace)
    if not path.is_file():
        raise CorruptTraceError(str(path), "truth sidecar not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptTraceError(str(path), f"unreadable truth sidecar: {e}")
    return GroundTruth.from_dict(doc, str(path))
