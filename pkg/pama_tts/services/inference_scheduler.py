"""
Inference-time decoding control.

Tracks which token the attention sits on and for how long, turns that into
the relative-position inputs of the next step, and decides when to stop.
Stopping needs no stop-token head: the attention must sit on the last token
and have spent at least its (scaled) predicted duration there.
"""
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from pama_tts.errors import AttentionError, PamaError
from pama_tts.models import TokenSequence
from pama_tts.services import duration_model
from pama_tts.services.model_assembly import PamaModel
from pama_tts.services.pama_attention import RelativePosition

logger = logging.getLogger(__name__)

CAP_MULTIPLIER = 3


@dataclass(frozen=True)
class MonotonicityEvent:
    step: int
    kind: str  # "skip" or "regression"
    from_token: int
    to_token: int


@dataclass
class DecodeState:
    durations: np.ndarray  # scaled predicted durations per filtered token
    ceiling: int
    max_frames: int
    token: int = 0
    frames_spent: int = 0
    emitted: int = 0
    trace: list[np.ndarray] = field(default_factory=list, repr=False)
    events: list[MonotonicityEvent] = field(default_factory=list)

    def __post_init__(self):
        self.durations = np.asarray(self.durations, dtype=np.int64)
        if self.durations.ndim != 1 or self.durations.size == 0:
            raise PamaError("decode state needs at least one token duration")
        if (self.durations < 1).any():
            raise PamaError("scaled durations must be at least 1 frame")
        if self.max_frames < 1:
            raise PamaError(f"frame cap must be positive, got {self.max_frames}")

    @property
    def n_tokens(self) -> int:
        return int(self.durations.size)

    @property
    def finished(self) -> bool:
        return self.token == self.n_tokens - 1 and self.frames_spent >= self.durations[-1]

    @property
    def truncated(self) -> bool:
        return self.emitted >= self.max_frames and not self.finished


@dataclass
class SynthesisResult:
    mel: np.ndarray  # (T, M)
    trace: np.ndarray  # (T, N)
    durations: np.ndarray  # scaled predicted frames per token
    events: list[MonotonicityEvent]
    truncated: bool

    @property
    def frames(self) -> int:
        return int(self.mel.shape[0])


def scale_durations(predicted, factor: float) -> np.ndarray:
    """max(1, round_half_up(factor * d)) per token."""
    if not np.isfinite(factor) or factor <= 0:
        raise PamaError(f"duration factor must be a positive finite number, got {factor}")
    return duration_model.to_frames(np.asarray(predicted, dtype=np.float64) * factor)


def frame_cap(scaled: np.ndarray, max_decode_frames: int) -> int:
    return int(min(max_decode_frames, CAP_MULTIPLIER * int(np.sum(scaled))))


def positions_for_step(state: DecodeState) -> RelativePosition:
    """Position of the frame about to be emitted within the token it is expected to land on.

    That token is the current one while its predicted duration lasts, then
    the next one. Forward counts frames already emitted on it, backward the
    predicted frames left after this one. Along a path that follows the
    durations this equals the label positions used in training.
    """
    j, spent = state.token, state.frames_spent
    if spent >= state.durations[j] and j + 1 < state.n_tokens:
        j, spent = j + 1, 0
    remaining = max(int(state.durations[j]) - spent - 1, 0)
    return RelativePosition.ceiled(spent, remaining, state.ceiling)


def advance(state: DecodeState, alpha_row) -> DecodeState:
    """Record one emitted frame; the argmax of alpha_row becomes the current token.

    Mutates and returns state. A jump of more than one token or a move
    backwards is logged as a monotonicity event; decoding carries on.
    """
    alpha_row = np.asarray(alpha_row)
    if alpha_row.shape != (state.n_tokens,):
        raise AttentionError(f"attention row has {alpha_row.shape} entries, expected {state.n_tokens}")
    j = int(np.argmax(alpha_row))
    if j == state.token:
        state.frames_spent += 1
    else:
        if j > state.token + 1:
            state.events.append(MonotonicityEvent(state.emitted, "skip", state.token, j))
        elif j < state.token:
            state.events.append(MonotonicityEvent(state.emitted, "regression", state.token, j))
        state.token = j
        state.frames_spent = 1
    state.trace.append(alpha_row.copy())
    state.emitted += 1
    return state


def should_stop(state: DecodeState) -> bool:
    return state.finished or state.emitted >= state.max_frames


def utterance_rng(seed: int, seq: TokenSequence) -> np.random.Generator:
    """Inference-time prenet dropout generator, keyed by the token text so synth and eval agree."""
    return np.random.default_rng([seed, zlib.crc32(seq.to_text().encode("utf-8"))])


def synthesize(
    model: PamaModel,
    seq: TokenSequence,
    factor: float | None = None,
    mode: str | None = None,
    rng: np.random.Generator | None = None,
) -> SynthesisResult:
    """Autoregressive decode of one utterance until should_stop."""
    cfg = model.cfg
    factor = cfg.duration_factor if factor is None else factor
    rng = rng or utterance_rng(cfg.seed, seq)

    memory, pred = model.prepare(seq)
    scaled = scale_durations(pred.durations.numpy(), factor)
    state = DecodeState(scaled, cfg.position_ceiling, frame_cap(scaled, cfg.max_decode_frames))
    carry = model.initial_carry(memory.n_tokens)
    prev = np.zeros(cfg.mel_dim, dtype=cfg.precision())
    frames = []
    while True:
        frame, carry, alpha = model.decode_step(prev, carry, memory, positions_for_step(state), rng, mode)
        advance(state, alpha)
        frames.append(frame)
        prev = frame
        if should_stop(state):
            break

    if state.truncated:
        logger.warning(f"decode hit the {state.max_frames}-frame cap before finishing the last token")
    for event in state.events:
        logger.info(f"monotonicity {event.kind} at frame {event.step}: token {event.from_token} -> {event.to_token}")
    return SynthesisResult(
        mel=np.stack(frames),
        trace=np.stack(state.trace),
        durations=scaled,
        events=list(state.events),
        truncated=state.truncated,
    )
