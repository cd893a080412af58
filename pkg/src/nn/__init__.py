from src.nn.model import (
    Architecture,
    ModelParams,
    decode_model,
    encode_model,
    forward,
    forward_batch,
    gradients,
    init_params,
    load_model,
    loss,
    predict,
    predict_batch,
    save_model,
)
from src.nn.gradcheck import REDUCED_ARCHITECTURE, check_gradients
from src.nn.training import Optimizer, TrainConfig, TrainReport, evaluate, train

__all__ = [
    "REDUCED_ARCHITECTURE",
    "Optimizer",
    "TrainConfig",
    "TrainReport",
    "check_gradients",
    "evaluate",
    "train",
    "Architecture",
    "ModelParams",
    "decode_model",
    "encode_model",
    "forward",
    "forward_batch",
    "gradients",
    "init_params",
    "load_model",
    "loss",
    "predict",
    "predict_batch",
    "save_model",
]
