"""
The full acoustic model: encoder, phoneme classifier, duration predictor,
progression-aware attention, prenet, decoder and mel head.

There is no stop-token head and no postnet; decoding ends from the attention
path and predicted durations (see inference_scheduler).
"""
from dataclasses import dataclass

import numpy as np

from pama_tts.config import Config
from pama_tts.errors import NonFiniteError, PamaError, ShapeError
from pama_tts.models import TokenSequence
from pama_tts.services import duration_model, pama_attention
from pama_tts.services.guidance import batch_alignment_weights
from pama_tts.services.pama_attention import RelativePosition
from pama_tts.services.token_model import Vocabulary, apply_filter
from pama_tts.utils.numerics import (
    Array,
    Parameter,
    add,
    concat,
    conv1d,
    cross_entropy,
    dropout,
    embedding_lookup,
    gated_bidirectional_recurrence,
    gather_rows,
    init_constant,
    init_uniform,
    l1,
    mask_rows,
    matmul,
    mse,
    relu,
    reshape,
    scale,
)

ModelParams = dict[str, Parameter]


@dataclass
class Batch:
    """Padded, teacher-forced training batch (B utterances)."""

    utt_ids: list[str]
    token_ids: np.ndarray  # (B, N_all) vocabulary indices
    all_lengths: np.ndarray  # (B,)
    kept_index: np.ndarray  # (B, N) rows of the encoder output kept by the filter
    token_lengths: np.ndarray  # (B,) filtered token counts
    class_ids: np.ndarray  # (B, N)
    durations: np.ndarray  # (B, N) label frames
    mel: np.ndarray  # (B, T, M)
    frame_lengths: np.ndarray  # (B,)
    guidance: np.ndarray  # (B, T, N) fuzzy targets, transposed to trace layout
    fwd: np.ndarray  # (B, T) ceilinged positions from labels
    bwd: np.ndarray  # (B, T)

    @property
    def token_mask(self) -> np.ndarray:
        return np.arange(self.kept_index.shape[1])[None, :] < self.token_lengths[:, None]

    @property
    def frame_mask(self) -> np.ndarray:
        return np.arange(self.mel.shape[1])[None, :] < self.frame_lengths[:, None]

    @property
    def all_mask(self) -> np.ndarray:
        return np.arange(self.token_ids.shape[1])[None, :] < self.all_lengths[:, None]


@dataclass
class LossBreakdown:
    total: Array
    mel: Array
    pc: Array
    dur: Array
    align: Array
    trace: Array  # (B, T, N) attention weights

    def components(self) -> dict[str, float]:
        return {
            "total": self.total.item(),
            "mel": self.mel.item(),
            "pc": self.pc.item(),
            "dur": self.dur.item(),
            "align": self.align.item(),
        }


@dataclass
class Memory:
    keys: Array  # (N, A)
    values: Array  # (N, D)

    @property
    def n_tokens(self) -> int:
        return self.keys.shape[0]


@dataclass
class DecoderCarry:
    alpha: np.ndarray  # (N,) attention after the previous step
    rnn: tuple[np.ndarray, np.ndarray] | None = None


def init_params(cfg: Config) -> ModelParams:
    """Every learnable array, drawn from one generator seeded by cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    dt = cfg.precision()
    vocab = Vocabulary(cfg.n_phonemes)
    params: ModelParams = {}

    def put(*items: Parameter):
        for p in items:
            if p.name in params:
                raise PamaError(f"duplicate parameter name {p.name}")
            params[p.name] = p

    e, c, k, h = cfg.token_embedding_dim, cfg.encoder_conv_channels, cfg.encoder_conv_kernel, cfg.encoder_hidden
    put(init_uniform(rng, "encoder.embedding", (vocab.size, e), e, dt))
    width = e
    for i in range(cfg.encoder_conv_layers):
        put(
            init_uniform(rng, f"encoder.conv{i}.kernel", (k, width, c), k * width, dt),
            init_constant(f"encoder.conv{i}.bias", (c,), dtype=dt),
        )
        width = c
    for direction in ("fwd", "bwd"):
        put(
            init_uniform(rng, f"encoder.rnn.{direction}.weight", (c + h, 4 * h), c + h, dt),
            init_constant(f"encoder.rnn.{direction}.bias", (4 * h,), dtype=dt),
        )
    d = cfg.encoder_dim
    put(
        init_uniform(rng, "classifier.weight", (d, vocab.n_classes), d, dt),
        init_constant("classifier.bias", (vocab.n_classes,), dtype=dt),
    )
    put(*duration_model.init_params(cfg, rng).values())
    put(*pama_attention.init_params(cfg, rng).values())
    width = cfg.mel_dim
    for i, size in enumerate(cfg.prenet_dims):
        put(
            init_uniform(rng, f"prenet.layer{i}.weight", (width, size), width, dt),
            init_constant(f"prenet.layer{i}.bias", (size,), dtype=dt),
        )
        width = size
    mel_in = d + cfg.decoder_hidden
    put(
        init_uniform(rng, "mel.weight", (mel_in, cfg.mel_dim), mel_in, dt),
        init_constant("mel.bias", (cfg.mel_dim,), dtype=dt),
    )
    return params


def check_params(params: ModelParams) -> None:
    for name, p in params.items():
        if p.name != name:
            raise PamaError(f"parameter registered as {name} is named {p.name}")
        if not np.all(np.isfinite(p.data)):
            raise NonFiniteError(f"parameter {name}")


def weighted_total(mel, pc, dur, align, cfg: Config) -> Array:
    """L = L_mel + a1 * L_pc + a2 * L_dur + a3 * L_align."""
    a1, a2, a3 = cfg.loss_weights
    return add(add(add(mel, scale(pc, a1)), scale(dur, a2)), scale(align, a3))


class PamaModel:
    def __init__(self, cfg: Config, params: ModelParams | None = None):
        self.cfg = cfg
        self.vocab = Vocabulary(cfg.n_phonemes)
        self.params = params if params is not None else init_params(cfg)
        check_params(self.params)

    def _p(self, name: str) -> Parameter:
        return self.params[name]

    # --- encoder ----------------------------------------------------------

    def encode_ids(self, token_ids: np.ndarray, lengths: np.ndarray | None = None) -> Array:
        """Embeddings -> conv stack -> bidirectional recurrence; (B, N_all, D)."""
        ids = np.asarray(token_ids, dtype=np.int64)
        mask = None if lengths is None else np.arange(ids.shape[-1])[None, :] < np.asarray(lengths)[:, None]
        x = embedding_lookup(self._p("encoder.embedding"), ids)
        for i in range(self.cfg.encoder_conv_layers):
            x = relu(add(conv1d(x, self._p(f"encoder.conv{i}.kernel")), self._p(f"encoder.conv{i}.bias")))
            if mask is not None:
                x = mask_rows(x, mask)
        return gated_bidirectional_recurrence(
            x,
            self._p("encoder.rnn.fwd.weight"),
            self._p("encoder.rnn.fwd.bias"),
            self._p("encoder.rnn.bwd.weight"),
            self._p("encoder.rnn.bwd.bias"),
            lengths,
        )

    def encode(self, seq: TokenSequence) -> tuple[Array, Array]:
        """Single utterance: (hidden_all (N_all, D), hidden_filtered (N, D))."""
        if len(seq) == 0:
            raise PamaError("encode: empty token sequence")
        ids = self.vocab.indices(seq)[None, :]
        hidden_all = reshape(self.encode_ids(ids), (len(seq), self.cfg.encoder_dim))
        return hidden_all, apply_filter(hidden_all, seq.filter_mask)

    def classify_phonemes(self, hidden_filtered, targets=None, weights=None) -> tuple[Array, Array | None]:
        """Per-token logits over filter-kept classes and (if targets given) the CE loss."""
        logits = add(matmul(hidden_filtered, self._p("classifier.weight")), self._p("classifier.bias"))
        if targets is None:
            return logits, None
        return logits, cross_entropy(logits, targets, weights=weights)

    # --- attention memory ---------------------------------------------------

    def memory_from(self, hidden_filtered, latent, token_mask=None) -> tuple[Array, Array]:
        code = duration_model.duration_code(self.params, latent) if self.cfg.use_duration_code else None
        return pama_attention.build_memory(self.params, hidden_filtered, code, token_mask)

    def prepare(self, seq: TokenSequence) -> tuple[Memory, duration_model.DurationPrediction]:
        """Encoder, duration predictor and attention memory for one utterance."""
        _, hidden = self.encode(seq)
        pred = duration_model.predict(self.params, hidden)
        keys, values = self.memory_from(hidden, pred.latent)
        return Memory(keys=keys, values=values), pred

    # --- decoder -------------------------------------------------------------

    def prenet(self, mel, train: bool, rng: np.random.Generator | None) -> Array:
        active = train or self.cfg.prenet_dropout_at_inference
        x = mel
        for i in range(len(self.cfg.prenet_dims)):
            x = relu(add(matmul(x, self._p(f"prenet.layer{i}.weight")), self._p(f"prenet.layer{i}.bias")))
            x = dropout(x, self.cfg.prenet_dropout, active, rng)
        return x

    def positions(self, fwd, bwd) -> Array:
        emb = pama_attention.position_embed(self.params, fwd, bwd, self.cfg.position_ceiling)
        if not self.cfg.use_position_embedding:
            return Array(np.zeros(emb.shape, dtype=emb.dtype))
        return emb

    def mel_head(self, ctx, states) -> Array:
        return add(matmul(concat([ctx, states], axis=-1), self._p("mel.weight")), self._p("mel.bias"))

    def initial_carry(self, n_tokens: int) -> DecoderCarry:
        alpha = np.zeros(n_tokens, dtype=self.cfg.precision())
        alpha[0] = 1.0
        return DecoderCarry(alpha=alpha)

    def decode_step(
        self,
        prev_mel: np.ndarray,
        carry: DecoderCarry,
        memory: Memory,
        position: RelativePosition,
        rng: np.random.Generator | None = None,
        mode: str | None = None,
    ) -> tuple[np.ndarray, DecoderCarry, np.ndarray]:
        """One inference frame: prenet + position -> recurrence -> attention -> context + state -> mel."""
        mode = mode or self.cfg.attention_mode
        dt = self.cfg.precision()
        pre = self.prenet(Array(np.asarray(prev_mel, dtype=dt)[None, :]), train=False, rng=rng)
        pre = reshape(pre, (pre.shape[-1],))
        q = pama_attention.build_query(self.params, pre, self.positions(position.fwd, position.bwd), carry.rnn)
        scores = pama_attention.energy(self.params, q.query, memory.keys)
        p = pama_attention.selection_probs(scores).numpy()
        if mode == "hard":
            alpha = pama_attention.hard_step(carry.alpha, p)
        else:
            alpha = pama_attention.sma_step(carry.alpha, p).numpy()
        ctx = pama_attention.context(Array(alpha.astype(dt)), memory.values)
        frame = self.mel_head(reshape(ctx, (1, -1)), reshape(q.state, (1, -1))).numpy()[0]
        return frame, DecoderCarry(alpha=alpha, rnn=q.rnn), alpha

    # --- teacher-forced forward + loss ----------------------------------------

    def noise_std(self, step: int) -> float:
        sigma = self.cfg.sigmoid_noise
        if self.cfg.noise_anneal_steps > 0:
            sigma *= max(0.0, 1.0 - step / self.cfg.noise_anneal_steps)
        return sigma

    def total_loss(self, batch: Batch, step: int = 0, train: bool = True) -> LossBreakdown:
        cfg = self.cfg
        dt = cfg.precision()
        rng = np.random.default_rng([cfg.seed, step])
        token_mask = batch.token_mask
        frame_mask = batch.frame_mask
        n_tokens = max(int(token_mask.sum()), 1)
        n_frames = max(int(frame_mask.sum()), 1)
        if batch.guidance.shape != (batch.mel.shape[0], batch.mel.shape[1], batch.kept_index.shape[1]):
            raise ShapeError("total_loss.guidance", batch.guidance.shape, batch.mel.shape)

        hidden_all = self.encode_ids(batch.token_ids, batch.all_lengths)
        hidden = mask_rows(gather_rows(hidden_all, batch.kept_index), token_mask)

        token_w = (token_mask / n_tokens).astype(dt)
        _, loss_pc = self.classify_phonemes(hidden, batch.class_ids, weights=token_w)

        pred = duration_model.predict(self.params, hidden, token_mask)
        loss_dur = l1(pred.durations, batch.durations.astype(dt), weights=token_w)

        keys, values = self.memory_from(hidden, pred.latent, token_mask)

        go = np.zeros_like(batch.mel[:, :1])
        prev = np.concatenate([go, batch.mel[:, :-1]], axis=1).astype(dt)
        pre = self.prenet(Array(prev), train=train, rng=rng)
        pos = self.positions(batch.fwd, batch.bwd)
        states, queries = pama_attention.build_query_sequence(self.params, pre, pos, batch.frame_lengths)

        scores = pama_attention.energy(self.params, queries, keys)
        p = pama_attention.selection_probs(scores, self.noise_std(step) if train else 0.0, rng)
        trace = pama_attention.sma_rollout(p, batch.token_lengths)

        ctx = pama_attention.context(trace, values)
        mel_out = self.mel_head(ctx, states)
        mel_w = np.broadcast_to((frame_mask / (n_frames * cfg.mel_dim))[..., None], mel_out.shape).astype(dt)
        loss_mel = mse(mel_out, batch.mel.astype(dt), weights=mel_w)

        align_w = batch_alignment_weights(
            batch.frame_lengths, batch.token_lengths, trace.shape[1], trace.shape[2], dtype=dt
        )
        loss_align = mse(trace, batch.guidance.astype(dt), weights=align_w)

        total = weighted_total(loss_mel, loss_pc, loss_dur, loss_align, cfg)
        return LossBreakdown(total=total, mel=loss_mel, pc=loss_pc, dur=loss_dur, align=loss_align, trace=trace)
