"""Input token sequences and the hidden-state filter."""
from typing import Sequence

import numpy as np
from pydantic import ValidationError

from pama_tts.errors import ShapeError, TokenError
from pama_tts.models import SILENT_BOUNDARY, Token, TokenKind, TokenSequence
from pama_tts.utils.numerics import Array, gather_rows

SILENCE = Token(kind=TokenKind.SILENCE)

# (phoneme ids, tone, boundary level following the syllable)
Syllable = tuple[Sequence[int], int, int]


class Vocabulary:
    """Bijection between (kind, id) tokens and global indices.

    Layout: phonemes, tones 1-5, boundaries #0-#3, silence.
    """

    def __init__(self, n_phonemes: int = 16):
        self.n_phonemes = n_phonemes
        self._tone_base = n_phonemes
        self._boundary_base = n_phonemes + 5
        self.silence_index = n_phonemes + 9
        self.size = n_phonemes + 10
        # classifier classes: phonemes, silence, #3
        self.n_classes = n_phonemes + 2

    def index(self, token: Token) -> int:
        if token.kind is TokenKind.PHONEME:
            if token.id >= self.n_phonemes:
                raise TokenError(f"phoneme p{token.id} outside vocabulary of {self.n_phonemes}")
            return token.id
        if token.kind is TokenKind.TONE:
            return self._tone_base + token.id - 1
        if token.kind is TokenKind.BOUNDARY:
            return self._boundary_base + token.id
        return self.silence_index

    def token(self, index: int) -> Token:
        if not 0 <= index < self.size:
            raise TokenError(f"vocabulary index {index} out of range")
        if index < self._tone_base:
            return Token(kind=TokenKind.PHONEME, id=index)
        if index < self._boundary_base:
            return Token(kind=TokenKind.TONE, id=index - self._tone_base + 1)
        if index < self.silence_index:
            return Token(kind=TokenKind.BOUNDARY, id=index - self._boundary_base)
        return SILENCE

    def class_id(self, token: Token) -> int:
        """Phoneme-classifier target for a frame-bearing token."""
        if not token.frame_bearing:
            raise TokenError(f"{token.name} is filtered out and has no class")
        if token.kind is TokenKind.PHONEME:
            return self.index(token)
        if token.kind is TokenKind.SILENCE:
            return self.n_phonemes
        return self.n_phonemes + 1

    def indices(self, seq: TokenSequence) -> np.ndarray:
        return np.array([self.index(t) for t in seq.tokens], dtype=np.int64)

    def class_ids(self, seq: TokenSequence) -> np.ndarray:
        return np.array([self.class_id(t) for t in seq.filtered_tokens], dtype=np.int64)


def make_sequence(tokens: Sequence[Token]) -> TokenSequence:
    tokens = tuple(tokens)
    try:
        return TokenSequence(tokens=tokens, filter_mask=tuple(t.frame_bearing for t in tokens))
    except ValidationError as e:
        raise TokenError(str(e.errors()[0].get("msg"))) from None


def build_sequence(syllables: Sequence[Syllable]) -> TokenSequence:
    """Per syllable: phonemes, then its tone, then the following boundary; wrapped in silence."""
    if not syllables:
        raise TokenError("cannot build a token sequence from zero syllables")
    tokens = [SILENCE]
    for n, (phonemes, tone, boundary) in enumerate(syllables):
        if not phonemes:
            raise TokenError(f"syllable {n} has no phonemes")
        try:
            tokens.extend(Token(kind=TokenKind.PHONEME, id=int(p)) for p in phonemes)
            tokens.append(Token(kind=TokenKind.TONE, id=int(tone)))
            tokens.append(Token(kind=TokenKind.BOUNDARY, id=int(boundary)))
        except ValidationError as e:
            raise TokenError(f"syllable {n}: {e.errors()[0].get('msg')}") from None
    tokens.append(SILENCE)
    return make_sequence(tokens)


def parse_syllables(text: str) -> list[Syllable]:
    """Parse `sil? (phon+ toneN #L)* sil?` into syllables."""
    names = text.split()
    if names and names[0] == "sil":
        names = names[1:]
    if names and names[-1] == "sil":
        names = names[:-1]
    syllables: list[Syllable] = []
    phonemes: list[int] = []
    tone: int | None = None
    for name in names:
        token = Token.parse(name)
        if token.kind is TokenKind.PHONEME:
            if tone is not None:
                raise TokenError(f"phoneme {name} after tone t{tone} needs a boundary first")
            phonemes.append(token.id)
        elif token.kind is TokenKind.TONE:
            if not phonemes or tone is not None:
                raise TokenError(f"tone {name} must follow one or more phonemes")
            tone = token.id
        elif token.kind is TokenKind.BOUNDARY:
            if tone is None:
                raise TokenError(f"boundary {name} must follow a tone")
            syllables.append((tuple(phonemes), tone, token.id))
            phonemes, tone = [], None
        else:
            raise TokenError("silence may only open or close an utterance")
    if phonemes or tone is not None:
        raise TokenError("utterance ends inside a syllable")
    return syllables


def parse_utterance(text: str) -> TokenSequence:
    return build_sequence(parse_syllables(text))


def filter_mask(seq: TokenSequence) -> np.ndarray:
    return np.asarray(seq.filter_mask, dtype=bool)


def apply_filter(hidden, mask) -> Array:
    """Drop rows whose mask entry is false; hidden is (N_all, D)."""
    mask = np.asarray(mask, dtype=bool)
    if hidden.shape[0] != mask.shape[0]:
        raise ShapeError("apply_filter", hidden.shape, mask.shape)
    if not mask.any():
        raise TokenError("apply_filter: mask keeps no rows")
    return gather_rows(hidden, np.flatnonzero(mask))


def is_silent(token: Token) -> bool:
    return token.kind is TokenKind.SILENCE or (token.kind is TokenKind.BOUNDARY and token.id == SILENT_BOUNDARY)
