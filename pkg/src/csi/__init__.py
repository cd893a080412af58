from src.csi.processing import (
    estimate_csi,
    extract_features,
    frame_delta,
    normalize_antenna_ratio,
    reference_mask,
    unwrap_phase,
)
from src.csi.trace_io import decode_trace, encode_trace, read_trace
from src.csi.types import CsiRecording, FeatureTensors, NormalizedCsi, SounderGrid

__all__ = [
    "CsiRecording",
    "FeatureTensors",
    "NormalizedCsi",
    "SounderGrid",
    "decode_trace",
    "encode_trace",
    "estimate_csi",
    "extract_features",
    "frame_delta",
    "normalize_antenna_ratio",
    "read_trace",
    "reference_mask",
    "unwrap_phase",
]
