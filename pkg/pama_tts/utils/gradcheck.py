"""Central finite-difference checks for taped gradients."""
from typing import Callable, Sequence

import numpy as np

from pama_tts.utils.numerics import Array, Parameter, Tape


def numeric_gradient(fn: Callable[[], Array], param: Parameter, eps: float = 1e-4) -> np.ndarray:
    """Central differences of the scalar fn() with respect to every entry of param."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    flat_out = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = fn().item()
        flat[i] = orig - eps
        minus = fn().item()
        flat[i] = orig
        flat_out[i] = (plus - minus) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn: Callable[[], Array], params: Sequence[Parameter], eps: float = 1e-4) -> float:
    """Largest relative error between taped and finite-difference gradients over params."""
    with Tape() as tape:
        loss = fn()
    analytic = tape.grad(loss, params)
    worst = 0.0
    for p in params:
        worst = max(worst, relative_error(analytic[p.name], numeric_gradient(fn, p, eps)))
    return worst
