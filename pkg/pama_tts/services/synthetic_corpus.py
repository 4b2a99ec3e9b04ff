"""
Synthetic speech corpus with exact alignments.

Every utterance gets a token sequence, per-token frame counts and
pseudo-mel frames. A frame of token j is that token's base pattern plus a
ramp that grows with the frame's position inside the token, plus a little
seeded noise, so both identity and within-token progress are visible in
the features.
"""
import logging

import numpy as np

from pama_tts.errors import PamaError
from pama_tts.models import AlignmentLabel, SyntheticUtterance, Token, TokenKind, TokenSequence
from pama_tts.services.token_model import Vocabulary, build_sequence, is_silent

logger = logging.getLogger(__name__)

SYLLABLES = (2, 8)
PHONEMES_PER_SYLLABLE = (1, 3)
PHONEME_FRAMES = (2, 12)
SILENCE_FRAMES = (3, 8)
BOUNDARY_WEIGHTS = np.array([0.5, 0.25, 0.15, 0.10])
RAMP_AMPLITUDE = 0.5
NOISE_STD = 0.02
SILENT_SCALE = 3.0


def hadamard(n: int) -> np.ndarray:
    """Sylvester construction; n must be a power of two."""
    if n < 1 or n & (n - 1):
        raise PamaError(f"hadamard order must be a power of two, got {n}")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.kron(h, np.array([[1.0, 1.0], [1.0, -1.0]]))
    return h


def base_patterns(mel_dim: int, n_phonemes: int = 16) -> np.ndarray:
    """One row per acoustic class: phonemes, then silence.

    Phonemes take Hadamard rows and their negatives; silence takes a scaled
    unit vector. Boundary #3 sounds like silence and shares its row.
    """
    h = hadamard(mel_dim)
    signed = np.concatenate([h, -h])
    if n_phonemes > signed.shape[0]:
        raise PamaError(f"{n_phonemes} phonemes need mel_dim >= {(n_phonemes + 1) // 2}")
    eye = np.eye(mel_dim)
    return np.concatenate([signed[:n_phonemes], SILENT_SCALE * eye[:1]])


def acoustic_class(token: Token, vocab: Vocabulary) -> int:
    """Row of base_patterns a frame-bearing token is rendered with."""
    if is_silent(token):
        return vocab.n_phonemes
    return vocab.class_id(token)


def ramp_direction(mel_dim: int) -> np.ndarray:
    return np.ones(mel_dim) / np.sqrt(mel_dim)


def _sample_syllables(rng: np.random.Generator, n_phonemes: int) -> list:
    count = int(rng.integers(SYLLABLES[0], SYLLABLES[1] + 1))
    syllables = []
    for _ in range(count):
        size = int(rng.integers(PHONEMES_PER_SYLLABLE[0], PHONEMES_PER_SYLLABLE[1] + 1))
        phonemes = tuple(int(p) for p in rng.integers(0, n_phonemes, size=size))
        tone = int(rng.integers(1, 6))
        boundary = int(rng.choice(4, p=BOUNDARY_WEIGHTS))
        syllables.append((phonemes, tone, boundary))
    return syllables


def _sample_durations(rng: np.random.Generator, tokens: list[Token]) -> list[int]:
    durations = []
    for token in tokens:
        lo, hi = SILENCE_FRAMES if is_silent(token) else PHONEME_FRAMES
        durations.append(int(rng.integers(lo, hi + 1)))
    return durations


def render_mel(
    tokens: list[Token],
    durations: list[int],
    vocab: Vocabulary,
    mel_dim: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Frames for filtered tokens; noiseless when rng is None."""
    patterns = base_patterns(mel_dim, vocab.n_phonemes)
    direction = ramp_direction(mel_dim)
    blocks = []
    for token, d in zip(tokens, durations):
        progress = np.arange(d)[:, None] / d
        blocks.append(patterns[acoustic_class(token, vocab)][None, :] + RAMP_AMPLITUDE * progress * direction[None, :])
    mel = np.concatenate(blocks)
    if rng is not None:
        mel = mel + rng.normal(0.0, NOISE_STD, size=mel.shape)
    return mel


def make_utterance(corpus_seed: int, index: int, n_phonemes: int = 16, mel_dim: int = 8) -> SyntheticUtterance:
    """Utterance `index` of the corpus; depends only on (corpus_seed, index)."""
    rng = np.random.default_rng([corpus_seed, index])
    vocab = Vocabulary(n_phonemes)
    seq: TokenSequence = build_sequence(_sample_syllables(rng, n_phonemes))
    kept = seq.filtered_tokens
    durations = _sample_durations(rng, kept)
    label = AlignmentLabel.of(durations)
    mel = render_mel(kept, durations, vocab, mel_dim, rng)
    return SyntheticUtterance(utt_id=f"utt_{index:04d}", tokens=seq, label=label, mel=mel)


def generate(corpus_seed: int, count: int, n_phonemes: int = 16, mel_dim: int = 8) -> list[SyntheticUtterance]:
    if count < 1:
        raise PamaError(f"corpus size must be at least 1, got {count}")
    corpus = [make_utterance(corpus_seed, i, n_phonemes, mel_dim) for i in range(count)]
    logger.info(f"Generated {count} utterances ({sum(u.label.T for u in corpus)} frames) with seed {corpus_seed}")
    return corpus


def split(corpus: list[SyntheticUtterance], train_fraction: float, seed: int = 0):
    """Shuffle by seed, then cut; returns (train, heldout) each in utt_id order."""
    if not 0.0 < train_fraction < 1.0:
        raise PamaError(f"train fraction must lie in (0, 1), got {train_fraction}")
    order = np.random.default_rng(seed).permutation(len(corpus))
    cut = int(round(train_fraction * len(corpus)))
    train = sorted((corpus[i] for i in order[:cut]), key=lambda u: u.utt_id)
    heldout = sorted((corpus[i] for i in order[cut:]), key=lambda u: u.utt_id)
    return train, heldout


def nearest_pattern(frames: np.ndarray, mel_dim: int, n_phonemes: int = 16) -> np.ndarray:
    """Acoustic class of the closest base pattern for every frame."""
    patterns = base_patterns(mel_dim, n_phonemes)
    dist = ((frames[:, None, :] - patterns[None, :, :]) ** 2).sum(axis=-1)
    return dist.argmin(axis=1)


def token_kind_counts(corpus: list[SyntheticUtterance]) -> dict[TokenKind, int]:
    counts = {kind: 0 for kind in TokenKind}
    for utt in corpus:
        for token in utt.tokens.tokens:
            counts[token.kind] += 1
    return counts
