from src.sim.channel import (
    add_noise,
    apply_agc,
    apply_frame_offsets,
    inject_interferer,
    inject_movement,
    respiration_modulation,
    simulate,
    subcarrier_frequencies,
)
from src.sim.config import (
    LOCATION_SNR_DB,
    SIGNATURES,
    AgcSpec,
    InterfererSpec,
    MovementSpec,
    OffsetSpec,
    Proximity,
    RespirationSpec,
    SimulationConfig,
    movement_session,
)
from src.sim.truth import RNG_NAME, GroundTruth, read_truth, truth_sidecar_path

__all__ = [
    "LOCATION_SNR_DB",
    "RNG_NAME",
    "SIGNATURES",
    "AgcSpec",
    "GroundTruth",
    "InterfererSpec",
    "MovementSpec",
    "OffsetSpec",
    "Proximity",
    "RespirationSpec",
    "SimulationConfig",
    "add_noise",
    "apply_agc",
    "apply_frame_offsets",
    "inject_interferer",
    "inject_movement",
    "movement_session",
    "read_truth",
    "respiration_modulation",
    "simulate",
    "subcarrier_frequencies",
    "truth_sidecar_path",
]
