"""
Deterministic mini-batch training and evaluation of the movement CNN.
"""
import logging
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.exceptions import ConfigError, ValidationError
from src.movement.classes import CLASS_COUNT, MovementClass
from src.movement.dataset import Dataset
from src.nn.model import (
    PARAM_ORDER,
    Architecture,
    ModelParams,
    batch_loss,
    forward_batch,
    gradients,
    init_params,
    predict_batch,
)
from src.threads import map_ordered

logger = logging.getLogger(__name__)

EVAL_BATCH = 64


class Optimizer(str, Enum):
    ADAM = "adam"
    SGD_MOMENTUM = "sgd_momentum"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    workers: int = 1
    test_fraction: float = 340 / 904

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate", f"must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError("epochs", f"must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError("batch_size", f"must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise ValidationError("workers", f"must be >= 1, got {self.workers}")
        if not 0 < self.test_fraction < 1:
            raise ValidationError("test_fraction", f"must be in (0, 1), got {self.test_fraction}")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum", "must be in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1/beta2", "must be in [0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed", f"{self.seed} is not a 64-bit unsigned integer")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), "optimizer": self.optimizer.value}

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "TrainConfig":
        if not isinstance(doc, dict):
            raise ConfigError(message="[train] must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(section="train", key=unknown[0], message=f"Unknown key '{unknown[0]}' in [train]")
        kwargs = dict(doc)
        if "optimizer" in doc:
            try:
                kwargs["optimizer"] = Optimizer(doc["optimizer"])
            except ValueError:
                raise ValidationError("optimizer", f"expected one of {[o.value for o in Optimizer]}")
        try:
            return cls(**kwargs).validate()
        except TypeError as e:
            raise ConfigError(message=f"Malformed train document: {e}")


class Adam:
    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.adam_epsilon
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        for name in PARAM_ORDER:
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SgdMomentum:
    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.momentum = config.momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        for name in PARAM_ORDER:
            v = self.velocity.setdefault(name, np.zeros_like(grads[name]))
            v *= self.momentum
            v -= self.lr * grads[name]
            params[name] += v


def make_optimizer(config: TrainConfig):
    return Adam(config) if config.optimizer is Optimizer.ADAM else SgdMomentum(config)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_loss: Optional[float] = None
    test_accuracy: Optional[float] = None


@dataclass
class TrainReport:
    epochs: List[EpochStats] = field(default_factory=list)
    confusion_matrix: List[List[int]] = field(default_factory=list)
    test_accuracy: Optional[float] = None
    per_class_accuracy: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": [e.epoch for e in self.epochs],
            "train_loss": [e.train_loss for e in self.epochs],
            "train_accuracy": [e.train_accuracy for e in self.epochs],
            "test_loss": [e.test_loss for e in self.epochs],
            "test_accuracy_per_epoch": [e.test_accuracy for e in self.epochs],
            "test_accuracy": self.test_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion_matrix": self.confusion_matrix,
        }


def _sharded_gradients(
        params: ModelParams,
        x: np.ndarray,
        y: np.ndarray,
        workers: int,
) -> Tuple[Dict[str, np.ndarray], float, np.ndarray]:
    """Batch gradients; with workers > 1 contiguous shards are reduced in shard order."""
    if workers <= 1 or len(y) < 2:
        result = gradients(params, x, y)
        return result.grads.arrays(), result.loss, result.probs

    shards = [s for s in np.array_split(np.arange(len(y)), min(workers, len(y))) if len(s)]
    results = map_ordered(lambda idx: gradients(params, x[idx], y[idx]), shards, workers)
    n = len(y)
    grads = {name: np.zeros(getattr(params, name).shape) for name in PARAM_ORDER}
    for idx, result in zip(shards, results):
        for name, g in result.grads.arrays().items():
            grads[name] += g * (len(idx) / n)
    total_loss = sum(r.loss * len(idx) for idx, r in zip(shards, results)) / n
    return grads, total_loss, np.concatenate([r.probs for r in results])


def _dataset_loss_accuracy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    losses, correct = [], 0
    for i in range(0, len(y), EVAL_BATCH):
        probs, _ = forward_batch(params, x[i:i + EVAL_BATCH])
        losses.append(batch_loss(probs, y[i:i + EVAL_BATCH]) * len(probs))
        correct += int(np.sum(np.argmax(probs, axis=1) == y[i:i + EVAL_BATCH]))
    return float(sum(losses) / len(y)), correct / len(y)


def confusion_matrix(truth: np.ndarray, predicted: np.ndarray, classes: int = CLASS_COUNT) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    matrix = np.zeros((classes, classes), dtype=int)
    np.add.at(matrix, (np.asarray(truth, dtype=int), np.asarray(predicted, dtype=int)), 1)
    return matrix


def train(
        dataset: Dataset,
        config: TrainConfig,
        test: Optional[Dataset] = None,
        progress: bool = False,
) -> Tuple[ModelParams, TrainReport]:
    """
    Train from a seeded initialization with a seeded shuffle per epoch.

    Train loss and accuracy per epoch are running means over the epoch's
    batches; the held-out split, when given, gets a full pass after each epoch.
    Returns float32 parameters.

    Raises:
        ValidationError: empty dataset or fewer than two classes present
    """
    config.validate()
    if len(dataset) == 0:
        raise ValidationError("dataset", "is empty")
    y = dataset.labels
    if len(np.unique(y)) < 2:
        raise ValidationError("dataset", "labels cover fewer than 2 classes")
    x = dataset.tensors
    channels, height, width = dataset.sample_shape

    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    model = init_params(Architecture(channels, height, width), init_seed)
    architecture = model.architecture
    weights = {k: v.astype(np.float64) for k, v in model.arrays().items()}
    optimizer = make_optimizer(config)
    shuffle = np.random.default_rng(shuffle_seed)
    report = TrainReport()

    for epoch in tqdm(range(1, config.epochs + 1), desc="epochs", disable=not progress):
        order = shuffle.permutation(len(y))
        loss_sum, correct = 0.0, 0
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            params = ModelParams.from_arrays(architecture, weights)
            grads, batch_mean_loss, probs = _sharded_gradients(params, x[idx], y[idx], config.workers)
            optimizer.step(weights, grads)
            loss_sum += batch_mean_loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == y[idx]))
        stats = EpochStats(epoch, loss_sum / len(y), correct / len(y))
        if test is not None and len(test):
            stats.test_loss, stats.test_accuracy = _dataset_loss_accuracy(
                ModelParams.from_arrays(architecture, weights), test.tensors, test.labels
            )
        report.epochs.append(stats)
        logger.info(
            f"Epoch {epoch}/{config.epochs}: loss {stats.train_loss:.4f}, acc {stats.train_accuracy:.3f}"
            + (f", test acc {stats.test_accuracy:.3f}" if stats.test_accuracy is not None else "")
        )

    final = ModelParams.from_arrays(architecture, weights).astype(np.float32)
    holdout = test if test is not None and len(test) else dataset
    evaluation = evaluate(final, holdout)
    report.confusion_matrix = evaluation["confusion_matrix"]
    report.test_accuracy = evaluation["accuracy"]
    report.per_class_accuracy = evaluation["per_class_accuracy"]
    return final, report


def evaluate(params: ModelParams, dataset: Dataset, group_by: Optional[str] = None) -> Dict[str, Any]:
    """
    Accuracy, confusion matrix, per-class accuracy and, with `group_by`, the
    accuracy per value of that manifest field (e.g. "location").
    """
    y = dataset.labels
    predicted = predict_batch(params, dataset.tensors)
    frame = pd.DataFrame({
        "label": [MovementClass.from_index(int(i)).value for i in y],
        "correct": predicted == y,
    })
    per_class = frame.groupby("label", sort=True)["correct"].mean()
    result: Dict[str, Any] = {
        "count": int(len(y)),
        "accuracy": float(frame["correct"].mean()),
        "confusion_matrix": confusion_matrix(y, predicted, params.architecture.classes).tolist(),
        "per_class_accuracy": {str(k): float(v) for k, v in per_class.items()},
    }
    if group_by:
        frame["group"] = dataset.column(group_by)
        grouped = frame.groupby("group", sort=True)["correct"].agg(["mean", "size"])
        result["group_by"] = group_by
        result["per_group_accuracy"] = {str(k): float(row["mean"]) for k, row in grouped.iterrows()}
        result["per_group_count"] = {str(k): int(row["size"]) for k, row in grouped.iterrows()}
    return result
