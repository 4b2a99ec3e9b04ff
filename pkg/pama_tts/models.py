from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pama_tts.errors import LabelError, TokenError

TONE_RANGE = range(1, 6)
BOUNDARY_RANGE = range(0, 4)
SILENT_BOUNDARY = 3


class TokenKind(str, Enum):
    PHONEME = "phoneme"
    TONE = "tone"
    BOUNDARY = "boundary"
    SILENCE = "silence"


class Token(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TokenKind
    id: int = 0

    @model_validator(mode="after")
    def _check_range(self):
        if self.kind is TokenKind.TONE and self.id not in TONE_RANGE:
            raise ValueError(f"tone must be in 1..5, got {self.id}")
        if self.kind is TokenKind.BOUNDARY and self.id not in BOUNDARY_RANGE:
            raise ValueError(f"boundary level must be in 0..3, got {self.id}")
        if self.kind is TokenKind.PHONEME and self.id < 0:
            raise ValueError(f"phoneme id must be non-negative, got {self.id}")
        if self.kind is TokenKind.SILENCE and self.id != 0:
            raise ValueError("silence carries no id")
        return self

    @property
    def frame_bearing(self) -> bool:
        """Phonemes, silence and the intonational-phrase boundary #3 occupy frames."""
        if self.kind in (TokenKind.PHONEME, TokenKind.SILENCE):
            return True
        return self.kind is TokenKind.BOUNDARY and self.id == SILENT_BOUNDARY

    @property
    def name(self) -> str:
        if self.kind is TokenKind.PHONEME:
            return f"p{self.id}"
        if self.kind is TokenKind.TONE:
            return f"t{self.id}"
        if self.kind is TokenKind.BOUNDARY:
            return f"#{self.id}"
        return "sil"

    @classmethod
    def parse(cls, name: str) -> "Token":
        try:
            if name == "sil":
                return cls(kind=TokenKind.SILENCE)
            if name.startswith("#"):
                return cls(kind=TokenKind.BOUNDARY, id=int(name[1:]))
            if name.startswith("t"):
                return cls(kind=TokenKind.TONE, id=int(name[1:]))
            if name.startswith("p"):
                return cls(kind=TokenKind.PHONEME, id=int(name[1:]))
        except ValueError as e:
            raise TokenError(f"bad token {name!r}: {e}") from None
        raise TokenError(f"unknown token {name!r}")


class TokenSequence(BaseModel):
    model_config = ConfigDict(frozen=True)

    tokens: tuple[Token, ...]
    filter_mask: tuple[bool, ...]

    @model_validator(mode="after")
    def _check_mask(self):
        if len(self.tokens) != len(self.filter_mask):
            raise ValueError("filter_mask length must equal token count")
        if tuple(t.frame_bearing for t in self.tokens) != self.filter_mask:
            raise ValueError("filter_mask must select exactly the frame-bearing tokens")
        if not any(self.filter_mask):
            raise ValueError("at least one token must be frame-bearing")
        return self

    def __len__(self):
        return len(self.tokens)

    @property
    def filtered_count(self) -> int:
        return sum(self.filter_mask)

    @property
    def filtered_tokens(self) -> list[Token]:
        return [t for t, keep in zip(self.tokens, self.filter_mask) if keep]

    @property
    def kept_index(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.filter_mask))

    def to_text(self) -> str:
        return " ".join(t.name for t in self.tokens)


class AlignmentLabel(BaseModel):
    """Frame counts per filtered token."""

    model_config = ConfigDict(frozen=True)

    durations: tuple[int, ...]

    @model_validator(mode="after")
    def _check_durations(self):
        if not self.durations:
            raise ValueError("alignment label needs at least one token")
        if any(d < 1 for d in self.durations):
            raise ValueError(f"every duration must be >= 1, got {list(self.durations)}")
        return self

    @property
    def T(self) -> int:
        return int(sum(self.durations))

    @property
    def N(self) -> int:
        return len(self.durations)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.durations)[:-1]]).astype(np.int64)

    def frame_tokens(self) -> np.ndarray:
        """Token index of every frame."""
        return np.repeat(np.arange(self.N), self.durations)

    @classmethod
    def of(cls, durations) -> "AlignmentLabel":
        try:
            return cls(durations=tuple(int(d) for d in durations))
        except ValueError as e:
            raise LabelError(str(e)) from None


@dataclass
class SyntheticUtterance:
    utt_id: str
    tokens: TokenSequence
    label: AlignmentLabel
    mel: np.ndarray  # (T, mel_dim)

    def __post_init__(self):
        if self.mel.shape[0] != self.label.T:
            raise LabelError(f"{self.utt_id}: mel has {self.mel.shape[0]} frames, label sums to {self.label.T}")
        if self.tokens.filtered_count != self.label.N:
            raise LabelError(
                f"{self.utt_id}: {self.tokens.filtered_count} filtered tokens but {self.label.N} durations"
            )


class RunManifest(BaseModel):
    command: str
    config: dict
    corpus_seed: int | None = None
    checkpoint: str | None = None
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))


@dataclass
class FactorResult:
    factor: float
    duration_mae: float
    skipped: int = 0
    regressions: int = 0
    truncations: int = 0
    frame_ratios: dict[str, float] = field(default_factory=dict)


class EvalReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame_shift_ms: float
    results: list[FactorResult]
    ablation: dict[str, bool | float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_counts(self):
        for r in self.results:
            if r.duration_mae < 0 or min(r.skipped, r.regressions, r.truncations) < 0:
                raise ValueError("MAE and event counts must be non-negative")
        return self
