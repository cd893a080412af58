"""
Small CNN movement classifier, forward and backward by hand.

    conv 3x3 (pad 1) -> ReLU -> maxpool 2x2 -> conv 3x3 -> ReLU -> maxpool 2x2 -> dense -> softmax

Arithmetic runs in float64 whatever the stored parameter dtype.

Model file (little-endian):
    magic "CNN1" | entry count u8 | per entry: ndim u8, dims u32 x ndim |
    float32 weights of every tensor entry in PARAM_ORDER
The first table entry is the input shape (channels, height, width).
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.artifacts import atomic_write_bytes
from src.exceptions import ContractError, CorruptTraceError, ValidationError
from src.movement.classes import CLASS_COUNT, MovementClass

MAGIC = b"CNN1"
PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w", "dense_b")
PROB_FLOOR = 1e-12
KERNEL = 3


@dataclass(frozen=True)
class Architecture:
    in_channels: int = 4
    height: int = 64
    width: int = 128
    filters: Tuple[int, int] = (8, 16)
    classes: int = CLASS_COUNT

    def __post_init__(self):
        if self.height % 4 or self.width % 4 or self.height < 4 or self.width < 4:
            raise ValidationError("architecture", f"input {self.height}x{self.width} must be multiples of 4")
        if min(self.in_channels, *self.filters, self.classes) < 1:
            raise ValidationError("architecture", "channel, filter and class counts must be >= 1")

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return self.in_channels, self.height, self.width

    @property
    def flattened(self) -> int:
        return self.filters[1] * (self.height // 4) * (self.width // 4)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        f1, f2 = self.filters
        return {
            "conv1_w": (f1, self.in_channels, KERNEL, KERNEL),
            "conv1_b": (f1,),
            "conv2_w": (f2, f1, KERNEL, KERNEL),
            "conv2_b": (f2,),
            "dense_w": (self.classes, self.flattened),
            "dense_b": (self.classes,),
        }


@dataclass(frozen=True, eq=False)
class ModelParams:
    architecture: Architecture
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    def __post_init__(self):
        for name, shape in self.architecture.shapes().items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ContractError("ModelParams", {name: shape}, {name: value.shape})
            if not np.all(np.isfinite(value)):
                raise ValidationError(name, "contains NaN or Inf")

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    @classmethod
    def from_arrays(cls, architecture: Architecture, arrays: Dict[str, np.ndarray]) -> "ModelParams":
        return cls(architecture, **{name: np.asarray(arrays[name]) for name in PARAM_ORDER})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams.from_arrays(
            self.architecture, {k: v.astype(dtype) for k, v in self.arrays().items()}
        )

    @classmethod
    def zeros(cls, architecture: Architecture) -> "ModelParams":
        return cls.from_arrays(architecture, {k: np.zeros(s) for k, s in architecture.shapes().items()})


def init_params(architecture: Architecture, seed: Union[int, np.random.SeedSequence]) -> ModelParams:
    """Fan-in scaled uniform weights (He for conv layers, LeCun for dense), zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in architecture.shapes().items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:]))
        limit = np.sqrt((3.0 if name == "dense_w" else 6.0) / fan_in)
        arrays[name] = rng.uniform(-limit, limit, shape)
    return ModelParams.from_arrays(architecture, arrays)


def _windows(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> zero-padded 3x3 windows (N, C, H, W, 3, 3), a strided view."""
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    win = _windows(x)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))      # (N, H, W, F)
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None], win


def conv_backward(dout: np.ndarray, win: np.ndarray, w: np.ndarray, need_dx: bool = True):
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))   # (F, C, 3, 3)
    db = dout.sum(axis=(0, 2, 3))
    if not need_dx:
        return None, dw, db
    # full correlation with the flipped kernel
    dx = np.tensordot(_windows(dout), w[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3]))
    return dx.transpose(0, 3, 1, 2), dw, db


def pool_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def pool_backward(dout: np.ndarray, arg: np.ndarray, shape: Tuple[int, int, int, int]) -> np.ndarray:
    n, c, h, w = shape
    dblocks = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    return dblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; every probability stays strictly inside (0, 1)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = np.clip(e / e.sum(axis=-1, keepdims=True), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return p / p.sum(axis=-1, keepdims=True)


class ForwardCache(NamedTuple):
    z1: np.ndarray
    win1: np.ndarray
    arg1: np.ndarray
    z2: np.ndarray
    win2: np.ndarray
    arg2: np.ndarray
    flat: np.ndarray
    pooled_shape: Tuple[int, ...]


def _check_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != params.architecture.input_shape:
        raise ContractError("forward", ("N",) + params.architecture.input_shape, x.shape)
    return x


def forward_batch(params: ModelParams, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """Class probabilities (N, classes) and the intermediates backprop needs."""
    x = _check_batch(params, x)
    p = {k: np.asarray(v, dtype=np.float64) for k, v in params.arrays().items()}
    z1, win1 = conv_forward(x, p["conv1_w"], p["conv1_b"])
    p1, arg1 = pool_forward(np.maximum(z1, 0.0))
    z2, win2 = conv_forward(p1, p["conv2_w"], p["conv2_b"])
    p2, arg2 = pool_forward(np.maximum(z2, 0.0))
    flat = p2.reshape(x.shape[0], -1)
    probs = softmax(flat @ p["dense_w"].T + p["dense_b"])
    return probs, ForwardCache(z1, win1, arg1, z2, win2, arg2, flat, p2.shape)


def forward(params: ModelParams, sample: np.ndarray) -> np.ndarray:
    """Probability vector for one (C, H, W) sample."""
    s = np.asarray(sample)
    if s.shape != params.architecture.input_shape:
        raise ContractError("forward", params.architecture.input_shape, s.shape)
    return forward_batch(params, s[None])[0][0]


def loss(probs: np.ndarray, label: int) -> float:
    return float(-np.log(max(float(probs[label]), PROB_FLOOR)))


def batch_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


class GradientResult(NamedTuple):
    grads: ModelParams
    loss: float
    probs: np.ndarray


def gradients(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> GradientResult:
    """Analytic gradients of the mean cross-entropy over the batch."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValidationError("batch", "must not be empty")
    probs, cache = forward_batch(params, x)
    n = len(labels)
    dense_w = np.asarray(params.dense_w, dtype=np.float64)
    conv2_w = np.asarray(params.conv2_w, dtype=np.float64)
    conv1_w = np.asarray(params.conv1_w, dtype=np.float64)

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    d_dense_w = dlogits.T @ cache.flat
    d_dense_b = dlogits.sum(axis=0)

    dp2 = (dlogits @ dense_w).reshape(cache.pooled_shape)
    dz2 = pool_backward(dp2, cache.arg2, cache.z2.shape) * (cache.z2 > 0)
    dp1, d_conv2_w, d_conv2_b = conv_backward(dz2, cache.win2, conv2_w)
    dz1 = pool_backward(dp1, cache.arg1, cache.z1.shape) * (cache.z1 > 0)
    _, d_conv1_w, d_conv1_b = conv_backward(dz1, cache.win1, conv1_w, need_dx=False)

    grads = ModelParams(params.architecture, d_conv1_w, d_conv1_b, d_conv2_w, d_conv2_b, d_dense_w, d_dense_b)
    return GradientResult(grads, batch_loss(probs, labels), probs)


def predict_batch(params: ModelParams, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Class indices; ties go to the smallest index."""
    x = np.asarray(x)
    out = [np.argmax(forward_batch(params, x[i:i + batch_size])[0], axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.empty(0, dtype=int)


def predict(params: ModelParams, sample: np.ndarray) -> MovementClass:
    return MovementClass.from_index(int(np.argmax(forward(params, sample))))


def encode_model(params: ModelParams) -> bytes:
    table: List[Tuple[int, ...]] = [params.architecture.input_shape]
    table += [getattr(params, name).shape for name in PARAM_ORDER]
    header = MAGIC + struct.pack("<B", len(table))
    for shape in table:
        header += struct.pack(f"<B{len(shape)}I", len(shape), *shape)
    payload = b"".join(np.ascontiguousarray(getattr(params, n), dtype="<f4").tobytes() for n in PARAM_ORDER)
    return header + payload


def decode_model(raw: bytes, source: str = "<bytes>") -> ModelParams:
    """Parse a model file; parameters come back as float32."""
    if raw[:4] != MAGIC:
        raise CorruptTraceError(source, f"bad magic {raw[:4]!r}")
    try:
        (count,) = struct.unpack_from("<B", raw, 4)
        offset = 5
        table = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<B", raw, offset)
            table.append(struct.unpack_from(f"<{ndim}I", raw, offset + 1))
            offset += 1 + 4 * ndim
    except struct.error as e:
        raise CorruptTraceError(source, f"truncated shape table: {e}")
    if count != len(PARAM_ORDER) + 1 or len(table[0]) != 3:
        raise CorruptTraceError(source, f"expected {len(PARAM_ORDER) + 1} table entries, got {count}")

    channels, height, width = table[0]
    shapes = dict(zip(PARAM_ORDER, table[1:]))
    try:
        architecture = Architecture(
            channels, height, width,
            (shapes["conv1_w"][0], shapes["conv2_w"][0]), shapes["dense_w"][0],
        )
    except (ValidationError, IndexError) as e:
        raise CorruptTraceError(source, f"inconsistent architecture: {e}")
    if {k: tuple(v) for k, v in shapes.items()} != architecture.shapes():
        raise CorruptTraceError(source, "shape table does not describe the CNN architecture")

    expected = sum(int(np.prod(s)) for s in shapes.values()) * 4
    if len(raw) - offset != expected:
        raise CorruptTraceError(source, f"payload is {len(raw) - offset} bytes, table implies {expected}")
    arrays = {}
    for name in PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=offset).reshape(shapes[name]).astype(
            np.float32)
        offset += size * 4
    try:
        return ModelParams.from_arrays(architecture, arrays)
    except ValidationError as e:
        raise CorruptTraceError(source, e.reason)


def save_model(path: Union[str, Path], params: ModelParams) -> Path:
    return atomic_write_bytes(path, encode_model(params))


def load_model(path: Union[str, Path]) -> ModelParams:
    p = Path(path)
    if not p.is_file():
        raise CorruptTraceError(str(p), "file not found")
    return decode_model(p.read_bytes(), str(p))
