from src.movement.classes import CLASS_COUNT, MovementClass
from src.movement.detector import (
    ClassifierSample,
    EnergyConfig,
    MovementEvent,
    ZScoreParams,
    amplitude_delta,
    detect_events,
    make_sample,
    make_samples,
    pool_subcarriers,
    segment_events,
    short_term_energy,
    suppress_agc,
    zscore,
)

# src.movement.dataset depends on src.sim and is imported directly where needed.

__all__ = [
    "CLASS_COUNT",
    "ClassifierSample",
    "EnergyConfig",
    "MovementClass",
    "MovementEvent",
    "ZScoreParams",
    "amplitude_delta",
    "detect_events",
    "make_sample",
    "make_samples",
    "pool_subcarriers",
    "segment_events",
    "short_term_energy",
    "suppress_agc",
    "zscore",
]
