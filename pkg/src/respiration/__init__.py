from src.respiration.estimator import (
    BandConfig,
    FilteredSignals,
    Modality,
    RespirationEstimate,
    SpectralReport,
    bandpass,
    detect_peaks,
    estimate_from_features,
    estimate_respiration,
    rate_from_peaks,
    select_subcarrier,
    spectral_concentration,
    stability_scores,
    track_respiration,
)
from src.respiration.scoring import score_estimates

__all__ = [
    "BandConfig",
    "FilteredSignals",
    "Modality",
    "RespirationEstimate",
    "SpectralReport",
    "bandpass",
    "detect_peaks",
    "estimate_from_features",
    "estimate_respiration",
    "rate_from_peaks",
    "score_estimates",
    "select_subcarrier",
    "spectral_concentration",
    "stability_scores",
    "track_respiration",
]
