import struct

import numpy as np
import pytest

from src.exceptions import ContractError, CorruptTraceError, ValidationError
from src.movement.classes import MovementClass
from src.nn.model import (
    MAGIC,
    PARAM_ORDER,
    PROB_FLOOR,
    Architecture,
    ModelParams,
    batch_loss,
    conv_forward,
    decode_model,
    encode_model,
    forward,
    forward_batch,
    gradients,
    init_params,
    load_model,
    loss,
    pool_forward,
    predict,
    predict_batch,
    save_model,
    softmax,
)

SMALL = Architecture(in_channels=2, height=8, width=12, filters=(3, 4))


@pytest.fixture
def params():
    return init_params(SMALL, seed=7)


@pytest.fixture
def batch():
    return np.random.default_rng(3).standard_normal((5,) + SMALL.input_shape)


def _constant_model(probs) -> ModelParams:
    arrays = {k: np.zeros(s) for k, s in SMALL.shapes().items()}
    arrays["dense_b"] = np.log(np.asarray(probs, dtype=np.float64))
    return ModelParams.from_arrays(SMALL, arrays)


def _naive_conv(x, w, b):
    n, c, h, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, w.shape[0], h, width))
    for s in range(n):
        for f in range(w.shape[0]):
            for i in range(h):
                for j in range(width):
                    out[s, f, i, j] = np.sum(padded[s, :, i:i + 3, j:j + 3] * w[f]) + b[f]
    return out


# ── architecture ──────────────────────────────────────────────────────────────

def test_default_architecture_parameter_count():
    arch = Architecture()
    assert arch.input_shape == (4, 64, 128)
    assert arch.flattened == 16 * 16 * 32
    assert sum(int(np.prod(s)) for s in arch.shapes().values()) == 34236


@pytest.mark.parametrize("kwargs", [{"height": 10}, {"width": 2}, {"filters": (0, 4)}, {"classes": 0}])
def test_architecture_rejects_bad_geometry(kwargs):
    with pytest.raises(ValidationError):
        Architecture(**kwargs)


def test_params_check_shapes_and_values():
    arrays = {k: np.zeros(s) for k, s in SMALL.shapes().items()}
    arrays["conv1_b"] = np.zeros(5)
    with pytest.raises(ContractError):
        ModelParams.from_arrays(SMALL, arrays)
    arrays["conv1_b"] = np.array([0.0, np.nan, 0.0])
    with pytest.raises(ValidationError):
        ModelParams.from_arrays(SMALL, arrays)


def test_init_is_seeded(params):
    again = init_params(SMALL, seed=7)
    other = init_params(SMALL, seed=8)
    for name in PARAM_ORDER:
        np.testing.assert_array_equal(getattr(params, name), getattr(again, name))
    assert not np.array_equal(params.conv1_w, other.conv1_w)
    assert np.all(params.conv2_b == 0.0)


# ── layers ────────────────────────────────────────────────────────────────────

def test_conv_matches_naive_loops(batch):
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out, _ = conv_forward(batch, w, b)
    np.testing.assert_allclose(out, _naive_conv(batch, w, b), atol=1e-12)


def test_conv_identity_kernel_copies_input(batch):
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = 1.0
    w[1, 1, 1, 1] = 1.0
    out, _ = conv_forward(batch, w, np.zeros(2))
    np.testing.assert_array_equal(out, batch)


def test_max_pool_picks_block_maxima():
    x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
    pooled, _ = pool_forward(x)
    np.testing.assert_array_equal(pooled[0, 0], [[5.0, 7.0], [13.0, 15.0]])


def test_softmax_is_shift_invariant_and_stable():
    logits = np.array([[1.0, 2.0, 3.0], [1001.0, 1002.0, 1003.0]])
    probs = softmax(logits)
    np.testing.assert_allclose(probs[0], probs[1])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_softmax_keeps_probabilities_off_the_bounds():
    probs = softmax(np.array([[0.0, 900.0, 0.0, 0.0], [-900.0, 0.0, 0.0, 0.0]]))
    assert np.all(probs > 0.0) and np.all(probs < 1.0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs[0].argmax() == 1


# ── forward pass ──────────────────────────────────────────────────────────────

def test_forward_outputs_a_distribution(params, batch):
    probs, _ = forward_batch(params, batch)
    assert probs.shape == (5, 4)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(forward(params, batch[2]), probs[2], atol=1e-12)


def test_zero_params_give_uniform_distribution(batch):
    np.testing.assert_array_equal(forward(ModelParams.zeros(SMALL), batch[0]), [0.25] * 4)


def test_forward_rejects_wrong_input_shape(params):
    with pytest.raises(ContractError):
        forward(params, np.zeros((2, 8, 8)))
    with pytest.raises(ContractError):
        forward_batch(params, np.zeros((1, 3, 8, 12)))


def test_permuting_dense_rows_permutes_outputs(params, batch):
    perm = np.array([2, 0, 3, 1])
    arrays = params.arrays()
    arrays = {**arrays, "dense_w": arrays["dense_w"][perm], "dense_b": arrays["dense_b"][perm]}
    permuted = ModelParams.from_arrays(SMALL, arrays)
    a, _ = forward_batch(params, batch)
    b, _ = forward_batch(permuted, batch)
    np.testing.assert_allclose(b, a[:, perm], atol=1e-12)


def test_float32_and_float64_params_agree(params, batch):
    a, _ = forward_batch(params.astype(np.float32), batch)
    b, _ = forward_batch(params.astype(np.float32).astype(np.float64), batch)
    np.testing.assert_array_equal(a, b)


# ── loss and prediction ───────────────────────────────────────────────────────

def test_loss_of_known_distribution(batch):
    model = _constant_model([0.1, 0.7, 0.1, 0.1])
    probs = forward(model, batch[0])
    np.testing.assert_allclose(probs, [0.1, 0.7, 0.1, 0.1], atol=1e-12)
    assert loss(probs, 1) == pytest.approx(-np.log(0.7))
    assert batch_loss(np.tile(probs, (2, 1)), np.array([1, 0])) == pytest.approx(
        (-np.log(0.7) - np.log(0.1)) / 2
    )


def test_loss_is_floored():
    assert loss(np.array([1.0, 0.0, 0.0, 0.0]), 2) == pytest.approx(-np.log(PROB_FLOOR))


def test_predict_ties_go_to_smallest_index(batch):
    model = _constant_model([0.3, 0.3, 0.2, 0.2])
    assert predict(model, batch[0]) is MovementClass.BODY_TURN
    assert predict_batch(model, batch).tolist() == [0] * 5


def test_predict_batch_handles_partial_batches(params, batch):
    assert predict_batch(params, batch, batch_size=2).tolist() == predict_batch(params, batch).tolist()
    assert predict_batch(params, batch[:0]).size == 0


# ── gradients ─────────────────────────────────────────────────────────────────

def test_duplicated_batch_gives_identical_gradients(params, batch):
    labels = np.array([0, 1, 2, 3, 1])
    single = gradients(params, batch, labels)
    doubled = gradients(params, np.concatenate([batch, batch]), np.concatenate([labels, labels]))
    for name in PARAM_ORDER:
        np.testing.assert_allclose(getattr(doubled.grads, name), getattr(single.grads, name), rtol=0, atol=1e-12)
    assert doubled.loss == pytest.approx(single.loss, abs=1e-12)


def test_single_sample_dense_bias_gradient_is_p_minus_one_hot(params, batch):
    result = gradients(params, batch[:1], np.array([2]))
    np.testing.assert_array_equal(result.grads.dense_b, result.probs[0] - np.eye(4)[2])


# ── model files ───────────────────────────────────────────────────────────────

def test_model_file_round_trip(tmp_path, params, batch):
    path = save_model(tmp_path / "m.cnn", params)
    loaded = load_model(path)
    assert loaded.architecture == SMALL
    for name in PARAM_ORDER:
        assert getattr(loaded, name).dtype == np.float32
        np.testing.assert_array_equal(getattr(loaded, name), getattr(params, name).astype(np.float32))
    assert encode_model(loaded) == encode_model(params)
    assert predict_batch(loaded, batch).tolist() == predict_batch(params.astype(np.float32), batch).tolist()


def test_model_file_layout(params):
    raw = encode_model(params)
    assert raw[:4] == MAGIC
    assert raw[4] == 7
    ndim, = struct.unpack_from("<B", raw, 5)
    assert struct.unpack_from(f"<{ndim}I", raw, 6) == SMALL.input_shape
    weights = sum(int(np.prod(s)) for s in SMALL.shapes().values())
    table = 5 + sum(1 + 4 * len(s) for s in [SMALL.input_shape, *SMALL.shapes().values()])
    assert len(raw) == table + 4 * weights


@pytest.mark.parametrize("mutate,reason", [
    (lambda raw: b"XXXX" + raw[4:], "bad magic"),
    (lambda raw: raw[:7], "truncated"),
    (lambda raw: raw[:-4], "payload"),
    (lambda raw: raw[:4] + bytes([3]) + raw[5:], "table entries"),
])
def test_decode_rejects_corrupt_models(params, mutate, reason):
    with pytest.raises(CorruptTraceError, match=reason):
        decode_model(mutate(encode_model(params)))


def test_decode_rejects_non_finite_weights(params):
    raw = bytearray(encode_model(params))
    struct.pack_into("<f", raw, len(raw) - 4, float("nan"))
    with pytest.raises(CorruptTraceError):
        decode_model(bytes(raw))


def test_load_missing_model(tmp_path):
    with pytest.raises(CorruptTraceError, match="not found"):
        load_model(tmp_path / "missing.cnn")
