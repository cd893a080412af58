"""
Simulation documents: SimulationConfig and its nested specs, with JSON mapping
(snake_case keys mirroring the dataclass fields) and field-level validation.
"""
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from src.exceptions import ConfigError, ValidationError
from src.movement.classes import MovementClass


class Proximity(str, Enum):
    NEAR_UE = "near_ue"        # within 0.5 m of the phone
    INDOOR_FAR = "indoor_far"
    OUTDOOR = "outdoor"


# Interferer path gain relative to the respiration path.
PROXIMITY_GAIN = {
    Proximity.NEAR_UE: 10.0,
    Proximity.INDOOR_FAR: 0.3,
    Proximity.OUTDOOR: 0.05,
}


@dataclass(frozen=True)
class MovementSignature:
    duration_s: float
    amplitude: float        # relative to the static channel RMS
    support: float          # fraction of subcarriers disturbed
    speed_mps: float        # scatterer speed, sets the Doppler texture
    envelope: str           # "hann" burst or "tukey" sustained


SIGNATURES = {
    MovementClass.BODY_TURN: MovementSignature(2.0, 1.0, 1.0, 0.6, "hann"),
    MovementClass.SITTING_UP: MovementSignature(3.0, 0.9, 1.0, 0.35, "tukey"),
    MovementClass.ARM_MOVE: MovementSignature(1.0, 0.5, 0.6, 0.8, "hann"),
    MovementClass.LEG_MOVE: MovementSignature(1.0, 0.35, 0.4, 0.25, "hann"),
}

# Synthetic deployment tiers standing in for measurement locations.
LOCATION_SNR_DB = {
    "lab": 30.0,
    "hall": 25.0,
    "gate": 20.0,
    "office": 15.0,
    "hallway": 10.0,
}


@dataclass(frozen=True)
class RespirationSpec:
    rate_hz: float = 0.25
    chest_displacement: float = 0.005
    enabled: bool = True

    @property
    def rate_bpm(self) -> float:
        return 60.0 * self.rate_hz


@dataclass(frozen=True)
class OffsetSpec:
    per_frame_phase: bool = False
    cfo_hz: float = 0.0
    sto_slope_rad_per_subcarrier: float = 0.0

    @property
    def active(self) -> bool:
        return self.per_frame_phase or self.cfo_hz != 0.0 or self.sto_slope_rad_per_subcarrier != 0.0


@dataclass(frozen=True)
class AgcSpec:
    enabled: bool = False
    step_db_std: float = 1.0
    hold_s: float = 2.0


@dataclass(frozen=True)
class InterfererSpec:
    proximity: Proximity
    motion_amplitude: float = 1.0
    active_interval: Tuple[float, float] = (0.0, 0.0)
    bandwidth_hz: float = 1.0


@dataclass(frozen=True)
class MovementSpec:
    movement_class: MovementClass
    start: float
    duration: float
    intensity: float = 1.0

    @classmethod
    def for_class(cls, movement_class: MovementClass, start: float, intensity: float = 1.0) -> "MovementSpec":
        """Spec using the signature-table duration for the class."""
        return cls(movement_class, start, SIGNATURES[movement_class].duration_s, intensity)

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class SimulationConfig:
    duration: float = 60.0
    antenna_count: int = 4
    subcarrier_count: int = 800
    frame_interval: float = 0.020
    carrier_hz: float = 3.5e9
    subcarrier_spacing_hz: float = 30e3
    respiration: RespirationSpec = field(default_factory=RespirationSpec)
    offsets: OffsetSpec = field(default_factory=OffsetSpec)
    agc: AgcSpec = field(default_factory=AgcSpec)
    noise_snr_db: Optional[float] = None
    interferers: Tuple[InterfererSpec, ...] = ()
    movements: Tuple[MovementSpec, ...] = ()
    seed: int = 0
    location: str = "default"

    @property
    def frame_count(self) -> int:
        return int(round(self.duration / self.frame_interval))

    def validate(self) -> "SimulationConfig":
        """Check every invariant; raises ValidationError naming the first bad field."""
        if self.antenna_count < 2:
            raise ValidationError("antenna_count", f"must be >= 2, got {self.antenna_count}")
        if self.subcarrier_count < 1:
            raise ValidationError("subcarrier_count", f"must be >= 1, got {self.subcarrier_count}")
        if not self.frame_interval > 0:
            raise ValidationError("frame_interval", f"must be > 0, got {self.frame_interval}")
        if not self.duration > 0 or self.frame_count < 2:
            raise ValidationError("duration", f"{self.duration} s yields fewer than 2 frames")
        if not self.carrier_hz > 0:
            raise ValidationError("carrier_hz", f"must be > 0, got {self.carrier_hz}")
        if not self.subcarrier_spacing_hz > 0:
            raise ValidationError("subcarrier_spacing_hz", f"must be > 0, got {self.subcarrier_spacing_hz}")
        if not 0.05 <= self.respiration.rate_hz <= 1.0:
            raise ValidationError("respiration.rate_hz", f"{self.respiration.rate_hz} outside [0.05, 1.0]")
        if self.respiration.chest_displacement < 0:
            raise ValidationError("respiration.chest_displacement", "must be >= 0")
        if self.agc.enabled and not self.agc.hold_s > 0:
            raise ValidationError("agc.hold_s", f"must be > 0, got {self.agc.hold_s}")
        if self.agc.step_db_std < 0:
            raise ValidationError("agc.step_db_std", "must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed", f"{self.seed} is not a 64-bit unsigned integer")

        for n, spec in enumerate(self.interferers):
            start, end = spec.active_interval
            if not 0 <= start < end <= self.duration:
                raise ValidationError(f"interferers[{n}].active_interval", f"[{start}, {end}] outside recording")
            if spec.motion_amplitude < 0:
                raise ValidationError(f"interferers[{n}].motion_amplitude", "must be >= 0")
            if not spec.bandwidth_hz > 0:
                raise ValidationError(f"interferers[{n}].bandwidth_hz", "must be > 0")

        ordered = sorted(self.movements, key=lambda m: m.start)
        for n, spec in enumerate(ordered):
            if not spec.duration > 0:
                raise ValidationError(f"movements[{n}].duration", "must be > 0")
            if spec.start < 0 or spec.end > self.duration:
                raise ValidationError(f"movements[{n}]", f"[{spec.start}, {spec.end}] outside recording")
            if spec.intensity < 0:
                raise ValidationError(f"movements[{n}].intensity", "must be >= 0")
            if n and spec.start < ordered[n - 1].end:
                raise ValidationError(f"movements[{n}]", "overlaps the previous movement")
        return self

    def to_dict(self) -> Dict[str, Any]:
        doc = asdict(self)
        doc["interferers"] = [
            {**asdict(i), "proximity": i.proximity.value, "active_interval": list(i.active_interval)}
            for i in self.interferers
        ]
        doc["movements"] = [
            {"class": m.movement_class.value, "start": m.start, "duration": m.duration, "intensity": m.intensity}
            for m in self.movements
        ]
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "SimulationConfig":
        """
        Build a config from its JSON document. Missing keys take defaults;
        unknown keys raise ConfigError; bad values raise ValidationError.
        """
        _reject_unknown("simulation", doc, {f.name for f in fields(cls)})
        kwargs = dict(doc)
        try:
            if "respiration" in doc:
                _reject_unknown("respiration", doc["respiration"], {f.name for f in fields(RespirationSpec)})
                kwargs["respiration"] = RespirationSpec(**doc["respiration"])
            if "offsets" in doc:
                _reject_unknown("offsets", doc["offsets"], {f.name for f in fields(OffsetSpec)})
                kwargs["offsets"] = OffsetSpec(**doc["offsets"])
            if "agc" in doc:
                _reject_unknown("agc", doc["agc"], {f.name for f in fields(AgcSpec)})
                kwargs["agc"] = AgcSpec(**doc["agc"])
            duration = float(doc.get("duration", cls.duration))
            kwargs["interferers"] = tuple(_interferer(i, duration) for i in doc.get("interferers", []))
            kwargs["movements"] = tuple(_movement(m) for m in doc.get("movements", []))
            return cls(**kwargs).validate()
        except (TypeError, ValueError) as e:
            raise ConfigError(message=f"Malformed simulation document: {e}")


def _reject_unknown(section: str, doc: Dict[str, Any], known: set) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(message=f"[{section}] must be a JSON object")
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(section=section, key=unknown[0], message=f"Unknown key '{unknown[0]}' in [{section}]")


def _interferer(doc: Dict[str, Any], duration: float) -> InterfererSpec:
    _reject_unknown("interferers", doc, {"proximity", "motion_amplitude", "active_interval", "bandwidth_hz"})
    try:
        proximity = Proximity(doc["proximity"])
    except (KeyError, ValueError):
        raise ValidationError("interferers.proximity", f"expected one of {[p.value for p in Proximity]}")
    interval = tuple(doc.get("active_interval", (0.0, duration)))
    if len(interval) != 2:
        raise ValidationError("interferers.active_interval", "expected [start, end]")
    return InterfererSpec(
        proximity=proximity,
        motion_amplitude=float(doc.get("motion_amplitude", 1.0)),
        active_interval=(float(interval[0]), float(interval[1])),
        bandwidth_hz=float(doc.get("bandwidth_hz", 1.0)),
    )


def _movement(doc: Dict[str, Any]) -> MovementSpec:
    _reject_unknown("movements", doc, {"class", "start", "duration", "intensity"})
    try:
        movement_class = MovementClass(doc["class"])
    except (KeyError, ValueError):
        raise ValidationError("movements.class", f"expected one of {[c.value for c in MovementClass]}")
    if "start" not in doc:
        raise ValidationError("movements.start", "missing")
    duration = doc.get("duration", SIGNATURES[movement_class].duration_s)
    return MovementSpec(movement_class, float(doc["start"]), float(duration), float(doc.get("intensity", 1.0)))


def movement_session(
        classes: List[MovementClass],
        first_start: float = 11.0,
        spacing: float = 4.5,
        **overrides,
) -> SimulationConfig:
    """
    Config with one movement per class in `classes`, placed `spacing` seconds
    apart after a motion-free lead-in; remaining fields from `overrides`.
    """
    movements = tuple(
        MovementSpec.for_class(c, first_start + n * spacing) for n, c in enumerate(classes)
    )
    duration = overrides.pop("duration", first_start + spacing * len(classes) + 2.0)
    return SimulationConfig(duration=duration, movements=movements, **overrides).validate()
