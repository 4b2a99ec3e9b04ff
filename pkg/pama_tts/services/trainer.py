"""
Teacher-forced training loop.

Batches are drawn in a seeded per-epoch order, every step uses a generator
seeded by (seed, step), and the optimizer moments are checkpointed, so a
resumed run continues the exact trajectory of an uninterrupted one.
"""
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from tqdm import tqdm

from pama_tts.config import Config, build_config, dump_config
from pama_tts.errors import CheckpointError, DivergenceError, NonFiniteError, PamaError
from pama_tts.models import AlignmentLabel, SyntheticUtterance
from pama_tts.services.guidance import fuzzy_matrix
from pama_tts.services.model_assembly import Batch, ModelParams, PamaModel
from pama_tts.services.token_model import Vocabulary
from pama_tts.services.training_logger import TrainingLogger
from pama_tts.storage.artifacts import LOSS_FILE, truncate_loss_history
from pama_tts.storage.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from pama_tts.utils.numerics import Parameter, Tape

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "model.ckpt"


def label_positions(label: AlignmentLabel, ceiling: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame relative positions from the label: fwd = t - start_j, bwd = end_j - 1 - t, both capped at ceiling."""
    tokens = label.frame_tokens()
    t = np.arange(label.T)
    start = label.starts[tokens]
    end = start + np.asarray(label.durations, dtype=np.int64)[tokens]
    return np.minimum(t - start, ceiling), np.minimum(end - 1 - t, ceiling)


def collate(utts: list[SyntheticUtterance], cfg: Config) -> Batch:
    """Pad a list of utterances into one teacher-forced batch."""
    if not utts:
        raise PamaError("cannot build a batch from zero utterances")
    vocab = Vocabulary(cfg.n_phonemes)
    b = len(utts)
    n_all = max(len(u.tokens) for u in utts)
    n = max(u.label.N for u in utts)
    t = max(u.label.T for u in utts)
    m = utts[0].mel.shape[1]
    if m != cfg.mel_dim:
        raise PamaError(f"corpus mel_dim {m} does not match config mel_dim {cfg.mel_dim}")

    batch = Batch(
        utt_ids=[u.utt_id for u in utts],
        token_ids=np.zeros((b, n_all), dtype=np.int64),
        all_lengths=np.zeros(b, dtype=np.int64),
        kept_index=np.zeros((b, n), dtype=np.int64),
        token_lengths=np.zeros(b, dtype=np.int64),
        class_ids=np.zeros((b, n), dtype=np.int64),
        durations=np.zeros((b, n)),
        mel=np.zeros((b, t, m)),
        frame_lengths=np.zeros(b, dtype=np.int64),
        guidance=np.zeros((b, t, n)),
        fwd=np.zeros((b, t), dtype=np.int64),
        bwd=np.zeros((b, t), dtype=np.int64),
    )
    for i, u in enumerate(utts):
        na, nk, nt = len(u.tokens), u.label.N, u.label.T
        batch.token_ids[i, :na] = vocab.indices(u.tokens)
        batch.all_lengths[i] = na
        batch.kept_index[i, :nk] = u.tokens.kept_index
        batch.token_lengths[i] = nk
        batch.class_ids[i, :nk] = vocab.class_ids(u.tokens)
        batch.durations[i, :nk] = u.label.durations
        batch.mel[i, :nt] = u.mel
        batch.frame_lengths[i] = nt
        batch.guidance[i, :nt, :nk] = fuzzy_matrix(u.label).T
        fwd, bwd = label_positions(u.label, cfg.position_ceiling)
        batch.fwd[i, :nt] = fwd
        batch.bwd[i, :nt] = bwd
    return batch


class Adam:
    """Adaptive-moment updates with global-norm gradient clipping."""

    def __init__(self, cfg: Config, params: ModelParams):
        self.lr = cfg.learning_rate
        self.beta1, self.beta2, self.eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.clip = cfg.grad_clip
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def clip_grads(self, grads: dict[str, np.ndarray]) -> float:
        norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
        if self.clip > 0 and norm > self.clip:
            factor = self.clip / norm
            for k in grads:
                grads[k] = grads[k] * factor
        return norm

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], t: int) -> None:
        """In-place update; t is the 1-based update count."""
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype, copy=False)

    def state(self) -> dict[str, np.ndarray]:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        return out

    def restore(self, moments: dict[str, np.ndarray]) -> None:
        for k in self.m:
            try:
                self.m[k] = moments[f"adam.m.{k}"].astype(self.m[k].dtype)
                self.v[k] = moments[f"adam.v.{k}"].astype(self.v[k].dtype)
            except KeyError:
                raise CheckpointError(f"checkpoint has no optimizer moments for {k}") from None


@dataclass
class TrainResult:
    params: ModelParams
    history: list[tuple[int, dict[str, float]]]
    checkpoint: Path
    step: int


def batch_indices(step: int, batch_size: int, corpus_size: int, seed: int) -> list[int]:
    """Utterance indices of the batch at a given step; each epoch is a fresh seeded permutation."""
    out = []
    orders: dict[int, np.ndarray] = {}
    for i in range(step * batch_size, (step + 1) * batch_size):
        epoch, pos = divmod(i, corpus_size)
        if epoch not in orders:
            orders[epoch] = np.random.default_rng([seed, 1_000_003, epoch]).permutation(corpus_size)
        out.append(int(orders[epoch][pos]))
    return out


def label_agreement(trace: np.ndarray, batch: Batch) -> float:
    """Fraction of real frames whose attention argmax is the label token."""
    agree = 0
    total = 0
    for i in range(trace.shape[0]):
        nt, nk = batch.frame_lengths[i], batch.token_lengths[i]
        path = trace[i, :nt, :nk].argmax(axis=1)
        truth = batch.guidance[i, :nt, :nk].argmax(axis=1)
        agree += int((path == truth).sum())
        total += int(nt)
    return agree / max(total, 1)


def model_from_checkpoint(ckpt: Checkpoint, overrides: dict | None = None) -> PamaModel:
    """Rebuild the model a checkpoint was saved from; overrides adjust inference-only fields."""
    values = dict(ckpt.config)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    cfg = build_config(values)
    dt = cfg.precision()
    params = {name: Parameter(name, value, dtype=dt) for name, value in ckpt.params.items()}
    model = PamaModel(cfg, params)
    expected = set(PamaModel(cfg).params)
    if set(params) != expected:
        missing = sorted(expected - set(params))
        extra = sorted(set(params) - expected)
        raise CheckpointError(f"checkpoint does not match the model: missing {missing[:3]}, unexpected {extra[:3]}")
    return model


def train(
    corpus: list[SyntheticUtterance],
    cfg: Config,
    out_dir: str | Path,
    steps: int,
    resume: bool = False,
) -> TrainResult:
    """Train for `steps` total optimizer steps, checkpointing into out_dir."""
    if not corpus:
        raise PamaError("training corpus is empty")
    if steps < 1:
        raise PamaError(f"steps must be positive, got {steps}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / CHECKPOINT_FILE
    loss_path = out / LOSS_FILE

    model = PamaModel(cfg)
    optimizer = Adam(cfg, model.params)
    start = 0
    if resume and ckpt_path.exists():
        ckpt = load_checkpoint(ckpt_path)
        if build_config(ckpt.config) != cfg:
            raise CheckpointError(f"{ckpt_path} was written with a different config")
        model = model_from_checkpoint(ckpt)
        optimizer = Adam(cfg, model.params)
        optimizer.restore(ckpt.moments)
        start = ckpt.step
        truncate_loss_history(loss_path, start)
        logger.info(f"Resuming from step {start} ({ckpt_path})")
    history_logger = TrainingLogger(loss_path, resume=start > 0)
    last_saved = ckpt_path if start > 0 else None

    def save(step: int) -> Path:
        snapshot = Checkpoint(
            step=step,
            config=cfg.model_dump(),
            params={k: p.data for k, p in model.params.items()},
            moments=optimizer.state(),
        )
        return save_checkpoint(ckpt_path, snapshot)

    (out / "config.conf").write_text(dump_config(cfg), encoding="utf-8")
    progress = tqdm(range(start, steps), initial=start, total=steps, disable=not sys.stderr.isatty(), desc="train")
    for step in progress:
        history_logger.start_timer()
        utts = [corpus[i] for i in batch_indices(step, min(cfg.batch_size, len(corpus)), len(corpus), cfg.seed)]
        batch = collate(utts, cfg)
        try:
            with Tape() as tape:
                losses = model.total_loss(batch, step=step, train=True)
                grads = tape.grad(losses.total, model.params)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteError("gradient")
        except NonFiniteError as e:
            logger.error(f"Training diverged at step {step + 1}: {e}")
            raise DivergenceError(step + 1, str(last_saved) if last_saved else None) from None

        grad_norm = optimizer.clip_grads(grads)
        optimizer.step(model.params, grads, step + 1)
        components = losses.components()
        history_logger.log(step + 1, components)
        progress.set_postfix(total=f"{components['total']:.4f}", align=f"{components['align']:.4f}")

        if (step + 1) % cfg.log_every == 0 or step + 1 == steps:
            agreement = label_agreement(losses.trace.numpy(), batch)
            logger.info(
                f"step {step + 1}/{steps} total={components['total']:.4f} mel={components['mel']:.4f} "
                f"pc={components['pc']:.4f} dur={components['dur']:.4f} align={components['align']:.4f} "
                f"label_agreement={agreement:.3f} grad_norm={grad_norm:.3f}"
            )
        if (step + 1) % cfg.checkpoint_every == 0 or step + 1 == steps:
            last_saved = save(step + 1)

    if start >= steps:
        logger.info(f"Checkpoint already at step {start}; nothing to do")
        last_saved = ckpt_path
    return TrainResult(params=model.params, history=history_logger.rows, checkpoint=last_saved, step=max(start, steps))
