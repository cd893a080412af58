import numpy as np
import pytest

from src.exceptions import InsufficientDataError
from src.nn.gradcheck import REDUCED_ARCHITECTURE, check_gradients, relative_error
from src.nn.model import ModelParams, init_params


@pytest.fixture
def batch():
    rng = np.random.default_rng(21)
    x = rng.standard_normal((3,) + REDUCED_ARCHITECTURE.input_shape)
    return x, np.array([0, 2, 3])


def test_relative_error_has_an_absolute_floor():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(2.0, 1.0) == pytest.approx(1 / 3)
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_analytic_gradients_match_finite_differences(batch, seed):
    params = init_params(REDUCED_ARCHITECTURE, seed=seed)
    result = check_gradients(params, *batch, count=50, seed=seed)
    assert len(result.checked) == 50
    assert result.max_relative_error <= 1e-4


def test_every_layer_gets_checked(batch):
    result = check_gradients(init_params(REDUCED_ARCHITECTURE, seed=5), *batch, count=200, seed=5)
    assert {c[0] for c in result.checked} >= {"conv1_w", "conv2_w", "dense_w"}


def test_check_accepts_float32_params(batch):
    params = init_params(REDUCED_ARCHITECTURE, seed=3).astype(np.float32)
    assert check_gradients(params, *batch, count=20).max_relative_error <= 1e-4


def test_too_few_kink_free_draws_is_reported(batch):
    # zero first-layer weights leave every first-layer ReLU on its kink
    zeros = ModelParams.zeros(REDUCED_ARCHITECTURE)
    with pytest.raises(InsufficientDataError) as err:
        check_gradients(zeros, *batch, count=50, max_draws=60)
    assert err.value.exit_code == 4
