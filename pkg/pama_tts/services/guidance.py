"""
Guided-attention targets built from alignment labels.

The fuzzy matrix replaces the hard 0/1 step at every internal token
boundary with a six-frame linear ramp (step 0.2) straddling the boundary:
three frames before it, three from it on.
"""
import numpy as np

from pama_tts.errors import ShapeError
from pama_tts.models import AlignmentLabel
from pama_tts.utils.numerics import Array, as_array, mse

RAMP_IN = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
RAMP_BEFORE = 3


def hard_matrix(label: AlignmentLabel) -> np.ndarray:
    """W[j, t] = 1 iff frame t lies in token j's span."""
    W = np.zeros((label.N, label.T))
    W[label.frame_tokens(), np.arange(label.T)] = 1.0
    return W


def fuzzy_matrix(label: AlignmentLabel) -> np.ndarray:
    W = hard_matrix(label)
    if label.N == 1:
        return W

    ramp = np.zeros_like(W)
    covered = np.zeros(label.T, dtype=bool)
    for j, b in enumerate(label.starts[1:]):
        for k, w_in in enumerate(RAMP_IN):
            t = b - RAMP_BEFORE + k
            if 0 <= t < label.T:
                ramp[j, t] += 1.0 - w_in
                ramp[j + 1, t] += w_in
                covered[t] = True

    W[:, covered] = ramp[:, covered]
    return W / W.sum(axis=0, keepdims=True)


def alignment_loss(W, A) -> Array:
    """(1/T) * sum over all N x T entries of (W - A)^2; differentiable in A."""
    A = as_array(A)
    W = np.asarray(W, dtype=A.dtype)
    if W.shape != A.shape or W.ndim != 2:
        raise ShapeError("alignment_loss", W.shape, A.shape)
    weights = np.full(W.shape, 1.0 / W.shape[1], dtype=A.dtype)
    return mse(A, W, weights=weights)


def batch_alignment_weights(frame_lengths, token_lengths, steps: int, tokens: int, dtype=np.float64) -> np.ndarray:
    """Per-entry weights for padded (B, T, N) traces: mean over utterances of (1/T_b) * sum."""
    frame_lengths = np.asarray(frame_lengths)
    token_lengths = np.asarray(token_lengths)
    batch = frame_lengths.shape[0]
    frame_mask = np.arange(steps)[None, :] < frame_lengths[:, None]
    token_mask = np.arange(tokens)[None, :] < token_lengths[:, None]
    w = frame_mask[:, :, None] & token_mask[:, None, :]
    return (w / (frame_lengths[:, None, None] * batch)).astype(dtype)
