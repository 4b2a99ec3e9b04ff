"""
Duration predictor over filtered encoder outputs.

Two stacked 1-D convolutions (ReLU) form the hidden layers; a linear head
reads frame counts from the last one. Those last hidden activations are the
latent duration code, projected to the encoder width before being added to
the attention memory.
"""
from dataclasses import dataclass

import numpy as np

from pama_tts.config import Config
from pama_tts.errors import ShapeError
from pama_tts.utils.numerics import (
    Array,
    Parameter,
    add,
    as_array,
    conv1d,
    init_constant,
    init_uniform,
    l1,
    mask_rows,
    matmul,
    relu,
    reshape,
)


@dataclass
class DurationPrediction:
    durations: Array  # (B, N) or (N,), frames
    latent: Array  # (B, N, F) or (N, F)


def init_params(cfg: Config, rng: np.random.Generator) -> dict[str, Parameter]:
    dt = cfg.precision()
    d, f, k = cfg.encoder_dim, cfg.duration_hidden, cfg.duration_kernel
    return {
        p.name: p
        for p in (
            init_uniform(rng, "duration.conv1.kernel", (k, d, f), k * d, dt),
            init_constant("duration.conv1.bias", (f,), dtype=dt),
            init_uniform(rng, "duration.conv2.kernel", (k, f, f), k * f, dt),
            init_constant("duration.conv2.bias", (f,), dtype=dt),
            init_uniform(rng, "duration.head.weight", (f, 1), f, dt),
            # start near the typical token length so early L1 gradients are informative
            init_constant("duration.head.bias", (1,), 5.0, dt),
            init_uniform(rng, "duration.code.weight", (f, d), f, dt),
            init_constant("duration.code.bias", (d,), dtype=dt),
        )
    }


def predict(params: dict[str, Parameter], encoder_filtered, token_mask=None) -> DurationPrediction:
    x = as_array(encoder_filtered)
    if x.ndim not in (2, 3) or x.shape[-2] < 1:
        raise ShapeError("duration.predict", x.shape)
    if token_mask is not None:
        x = mask_rows(x, token_mask)
    h = relu(add(conv1d(x, params["duration.conv1.kernel"]), params["duration.conv1.bias"]))
    if token_mask is not None:
        h = mask_rows(h, token_mask)
    h = relu(add(conv1d(h, params["duration.conv2.kernel"]), params["duration.conv2.bias"]))
    if token_mask is not None:
        h = mask_rows(h, token_mask)
    out = add(matmul(h, params["duration.head.weight"]), params["duration.head.bias"])
    return DurationPrediction(durations=reshape(out, out.shape[:-1]), latent=h)


def duration_code(params: dict[str, Parameter], latent) -> Array:
    """Linear projection of the latent code to the encoder width."""
    return add(matmul(as_array(latent), params["duration.code.weight"]), params["duration.code.bias"])


def duration_loss(pred, label, weights=None) -> Array:
    """Mean absolute frame difference (or weighted sum for padded batches)."""
    pred = pred.durations if isinstance(pred, DurationPrediction) else as_array(pred)
    target = np.asarray(label, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError("duration_loss", pred.shape, target.shape)
    return l1(pred, target, weights=weights)


def round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def to_frames(pred: DurationPrediction | np.ndarray) -> np.ndarray:
    """Inference-time integer durations: rounded half-up, at least one frame."""
    values = pred.durations.numpy() if isinstance(pred, DurationPrediction) else np.asarray(pred)
    return np.maximum(round_half_up(values), 1)
