"""
Central finite-difference check of the analytic CNN gradients.

A perturbation that flips a ReLU or moves a max-pool winner crosses a kink of
the loss, where the difference quotient is meaningless; such draws are skipped
and another parameter is drawn in their place.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from src.exceptions import InsufficientDataError
from src.nn.model import PARAM_ORDER, Architecture, ModelParams, batch_loss, forward_batch, gradients

logger = logging.getLogger(__name__)

# Input 4x8x8 with 2/2 filters keeps every difference quotient well conditioned.
REDUCED_ARCHITECTURE = Architecture(in_channels=4, height=8, width=8, filters=(2, 2))


@dataclass
class GradCheckResult:
    checked: List[Tuple[str, int, float, float, float]] = field(default_factory=list)  # name, index, analytic, numeric, rel
    skipped: int = 0

    @property
    def max_relative_error(self) -> float:
        return max((c[4] for c in self.checked), default=0.0)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)


def _pattern(params: ModelParams, x: np.ndarray, y: np.ndarray) -> Tuple[float, tuple]:
    probs, cache = forward_batch(params, x)
    switches = (cache.z1 > 0, cache.arg1, cache.z2 > 0, cache.arg2)
    return batch_loss(probs, y), switches


def _same(a: tuple, b: tuple) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def check_gradients(
        params: ModelParams,
        x: np.ndarray,
        y: np.ndarray,
        count: int = 50,
        step: float = 1e-4,
        seed: int = 0,
        max_draws: int = 5000,
) -> GradCheckResult:
    """Compare `count` randomly drawn parameters' analytic and numeric derivatives."""
    params = params.astype(np.float64)
    y = np.asarray(y, dtype=int)
    analytic = gradients(params, x, y).grads.arrays()
    _, base_switches = _pattern(params, x, y)
    base = params.arrays()
    sizes = np.array([base[name].size for name in PARAM_ORDER])
    rng = np.random.default_rng(seed)
    result = GradCheckResult()

    for _ in range(max_draws):
        if len(result.checked) >= count:
            break
        name = PARAM_ORDER[int(rng.choice(len(PARAM_ORDER), p=sizes / sizes.sum()))]
        index = int(rng.integers(base[name].size))

        losses = []
        for sign in (1.0, -1.0):
            perturbed = {k: v.copy() for k, v in base.items()}
            perturbed[name].flat[index] += sign * step
            value, switches = _pattern(ModelParams.from_arrays(params.architecture, perturbed), x, y)
            if not _same(switches, base_switches):
                break
            losses.append(value)
        if len(losses) < 2:
            result.skipped += 1
            continue

        numeric = (losses[0] - losses[1]) / (2.0 * step)
        a = float(analytic[name].flat[index])
        result.checked.append((name, index, a, numeric, relative_error(a, numeric)))

    if len(result.checked) < count:
        raise InsufficientDataError("gradient check", f"{count} kink-free parameters", len(result.checked))
    logger.debug(
        f"Gradient check: {len(result.checked)} parameters, {result.skipped} skipped, "
        f"max relative error {result.max_relative_error:.2e}"
    )
    return result
