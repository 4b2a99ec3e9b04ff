"""
Progression-aware stepwise monotonic attention.

Memory rows are encoder outputs plus the projected duration code; the query
is the decoder recurrence run over [prenet output, relative-position
embedding]. Alignment moves by the stepwise monotonic recursion: at each
decoder step every token either keeps its mass (probability p_j) or hands
it to the next token.
"""
from dataclasses import dataclass, field

import numpy as np

from pama_tts.config import Config
from pama_tts.errors import AttentionError, PamaError, ShapeError
from pama_tts.utils.numerics import (
    Array,
    Parameter,
    add,
    as_array,
    concat,
    embedding_lookup,
    gated_recurrence,
    init_constant,
    init_uniform,
    lstm_cell,
    mask_rows,
    matmul,
    monotonic_scan,
    pairwise_add,
    reshape,
    sigmoid,
    sma_step,
    tanh,
)

__all__ = [
    "RelativePosition",
    "QueryStep",
    "init_params",
    "build_memory",
    "position_embed",
    "position_vector",
    "build_query",
    "build_query_sequence",
    "energy",
    "selection_probs",
    "sma_step",
    "sma_rollout",
    "hard_step",
    "context",
]


@dataclass(frozen=True)
class RelativePosition:
    fwd: int
    bwd: int
    ceiling: int

    def __post_init__(self):
        if not (0 <= self.fwd <= self.ceiling and 0 <= self.bwd <= self.ceiling):
            raise PamaError(f"position ({self.fwd}, {self.bwd}) outside [0, {self.ceiling}]")

    @classmethod
    def ceiled(cls, fwd: int, bwd: int, ceiling: int) -> "RelativePosition":
        return cls(min(max(fwd, 0), ceiling), min(max(bwd, 0), ceiling), ceiling)


@dataclass
class QueryStep:
    query: Array  # (attention_dim,)
    state: Array  # decoder recurrent output
    rnn: tuple[np.ndarray, np.ndarray] = field(repr=False)


def init_params(cfg: Config, rng: np.random.Generator) -> dict[str, Parameter]:
    dt = cfg.precision()
    d, a = cfg.encoder_dim, cfg.attention_dim
    c, e = cfg.position_ceiling, cfg.position_embedding_dim
    hd = cfg.decoder_hidden
    rnn_in = cfg.prenet_dims[-1] + 2 * e
    return {
        p.name: p
        for p in (
            init_uniform(rng, "position.fwd_table", (c + 1, e), e, dt),
            init_uniform(rng, "position.bwd_table", (c + 1, e), e, dt),
            init_uniform(rng, "decoder.rnn.weight", (rnn_in + hd, 4 * hd), rnn_in + hd, dt),
            init_constant("decoder.rnn.bias", (4 * hd,), dtype=dt),
            init_uniform(rng, "attention.query.weight", (hd, a), hd, dt),
            init_uniform(rng, "attention.key.weight", (d, a), d, dt),
            init_uniform(rng, "attention.value.weight", (d, d), d, dt),
            init_constant("attention.energy.bias", (a,), dtype=dt),
            init_uniform(rng, "attention.energy.v", (a, 1), a, dt),
            init_constant("attention.score_bias", (1,), cfg.score_bias_init, dt),
        )
    }


def build_memory(params, encoder_filtered, duration_code=None, token_mask=None) -> tuple[Array, Array]:
    """memory = encoder output + duration code; keys and values are its linear projections."""
    memory = as_array(encoder_filtered)
    if duration_code is not None:
        code = as_array(duration_code)
        if code.shape != memory.shape:
            raise ShapeError("build_memory", memory.shape, code.shape)
        memory = add(memory, code)
    if token_mask is not None:
        memory = mask_rows(memory, token_mask)
    keys = matmul(memory, params["attention.key.weight"])
    values = matmul(memory, params["attention.value.weight"])
    return keys, values


def position_embed(params, fwd, bwd, ceiling: int) -> Array:
    """concat(fwd_table[fwd], bwd_table[bwd]); indices must already be ceilinged."""
    fwd = np.asarray(fwd, dtype=np.int64)
    bwd = np.asarray(bwd, dtype=np.int64)
    for label, idx in (("forward", fwd), ("backward", bwd)):
        if idx.size and (idx.min() < 0 or idx.max() > ceiling):
            raise PamaError(f"{label} position {int(idx.max())} exceeds ceiling {ceiling}")
    return concat(
        [
            embedding_lookup(params["position.fwd_table"], fwd),
            embedding_lookup(params["position.bwd_table"], bwd),
        ],
        axis=-1,
    )


def position_vector(params, pos: RelativePosition) -> Array:
    return position_embed(params, pos.fwd, pos.bwd, pos.ceiling)


def build_query_sequence(params, prenet_out, pos_vectors, frame_lengths=None) -> tuple[Array, Array]:
    """Teacher-forced queries for a whole (B, T, .) batch; returns (decoder states, queries)."""
    rnn_in = concat([prenet_out, pos_vectors], axis=-1)
    states = gated_recurrence(rnn_in, params["decoder.rnn.weight"], params["decoder.rnn.bias"], frame_lengths)
    return states, matmul(states, params["attention.query.weight"])


def build_query(params, prenet_out, pos_vector, rnn=None) -> QueryStep:
    """Single decoder step: concat, recurrent update, query projection."""
    x = concat([prenet_out, pos_vector], axis=-1)
    w, b = params["decoder.rnn.weight"].numpy(), params["decoder.rnn.bias"].numpy()
    hidden = b.shape[0] // 4
    if rnn is None:
        zeros = np.zeros(hidden, dtype=w.dtype)
        rnn = (zeros, zeros)
    h, c, _ = lstm_cell(x.numpy(), rnn[0], rnn[1], w, b)
    state = Array(h)
    query = reshape(matmul(reshape(state, (1, hidden)), params["attention.query.weight"]), (-1,))
    return QueryStep(query=query, state=state, rnn=(h, c))


def energy(params, query, keys) -> Array:
    """e_j = v^T tanh(query + key_j + b) + score_bias; query is already W_q-projected."""
    query, keys = as_array(query), as_array(keys)
    single = query.ndim == keys.ndim - 1
    out_shape = query.shape[:-1] + (keys.shape[-2],) if single else None
    if single:
        query = reshape(query, query.shape[:-1] + (1, query.shape[-1]))
    pre = tanh(add(pairwise_add(query, keys), params["attention.energy.bias"]))
    scores = matmul(pre, params["attention.energy.v"])
    scores = reshape(scores, out_shape if single else scores.shape[:-1])
    return add(scores, params["attention.score_bias"])


def selection_probs(scores, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> Array:
    """p = sigmoid(e + gaussian noise); noise only when noise_std > 0 (training)."""
    scores = as_array(scores)
    if noise_std > 0.0:
        rng = rng or np.random.default_rng()
        noise = rng.normal(0.0, noise_std, size=scores.shape).astype(scores.dtype)
        scores = add(scores, Array(noise))
    return sigmoid(scores)


def sma_rollout(p, token_lengths=None) -> Array:
    """Soft attention trace (B, T, N) from selection probabilities, starting on token 0."""
    return monotonic_scan(p, token_lengths)


def hard_step(alpha_prev: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Stay on j if p_j >= 0.5, else move to j + 1; the last token always stays."""
    alpha_prev = np.asarray(alpha_prev)
    hot = np.flatnonzero(alpha_prev)
    if hot.size != 1 or not np.isclose(alpha_prev[hot[0]], 1.0):
        raise AttentionError("hard_step expects a one-hot attention row")
    j = int(hot[0])
    n = alpha_prev.shape[0]
    if j < n - 1 and np.asarray(p)[j] < 0.5:
        j += 1
    out = np.zeros_like(alpha_prev)
    out[j] = 1.0
    return out


def context(alpha, values) -> Array:
    """sum_j alpha_j * value_j."""
    alpha, values = as_array(alpha), as_array(values)
    if alpha.ndim == 1:
        return reshape(matmul(reshape(alpha, (1, alpha.shape[0])), values), (values.shape[-1],))
    return matmul(alpha, values)
