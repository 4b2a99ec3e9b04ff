import logging
import os
from pathlib import Path
from typing import Any, Literal

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from pama_tts.errors import ConfigError

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

SEED_ENV = "PAMA_SEED"


class Config(BaseModel):
    """Every hyperparameter of the model, training loop and decoder."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    seed: int = 7
    dtype: Literal["float32", "float64"] = "float32"

    # vocabulary
    n_phonemes: int = Field(16, ge=1)

    # encoder
    token_embedding_dim: int = Field(32, ge=1)
    encoder_conv_channels: int = Field(32, ge=1)
    encoder_conv_kernel: int = Field(5, ge=1)
    encoder_conv_layers: int = Field(3, ge=1)
    encoder_hidden: int = Field(32, ge=1)

    # duration predictor
    duration_hidden: int = Field(32, ge=1)
    duration_kernel: int = Field(3, ge=1)

    # attention + decoder
    attention_dim: int = Field(32, ge=1)
    prenet_dims: list[int] = Field(default_factory=lambda: [32, 32])
    prenet_dropout: float = Field(0.5, ge=0.0, lt=1.0)
    prenet_dropout_at_inference: bool = True
    decoder_hidden: int = Field(64, ge=1)
    mel_dim: int = 8
    position_ceiling: int = Field(50, ge=1)
    position_embedding_dim: int = Field(16, ge=1)
    use_position_embedding: bool = True
    use_duration_code: bool = True
    score_bias_init: float = -1.0
    sigmoid_noise: float = Field(1.0, ge=0.0)
    noise_anneal_steps: int = Field(0, ge=0)

    # loss weights
    alpha_pc: float = Field(0.005, ge=0.0)
    alpha_dur: float = Field(0.025, ge=0.0)
    alpha_align: float = Field(0.25, ge=0.0)

    # optimisation
    learning_rate: float = Field(1e-3, gt=0.0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    grad_clip: float = Field(1.0, ge=0.0)
    batch_size: int = Field(8, ge=1)
    train_fraction: float = Field(0.9, gt=0.0, lt=1.0)
    checkpoint_every: int = Field(200, ge=1)
    log_every: int = Field(50, ge=1)

    # inference
    attention_mode: Literal["hard", "soft"] = "hard"
    duration_factor: float = Field(1.0, gt=0.0)
    max_decode_frames: int = Field(2000, ge=1)
    frame_shift_ms: float = Field(10.0, gt=0.0)
    eval_workers: int = Field(4, ge=1)

    @field_validator("prenet_dims", mode="before")
    @classmethod
    def _split_dims(cls, value: Any):
        if isinstance(value, str):
            value = [part for part in value.replace(",", " ").split() if part]
        return value

    @field_validator("prenet_dims")
    @classmethod
    def _positive_dims(cls, value: list[int]):
        if not value or any(d < 1 for d in value):
            raise ValueError("prenet_dims must be a non-empty list of positive sizes")
        return value

    @field_validator("mel_dim")
    @classmethod
    def _power_of_two(cls, value: int):
        if value < 8 or value & (value - 1):
            raise ValueError("mel_dim must be a power of two and at least 8")
        return value

    @property
    def encoder_dim(self) -> int:
        return 2 * self.encoder_hidden

    @property
    def vocab_size(self) -> int:
        # phonemes, tones 1-5, boundaries #0-#3, silence
        return self.n_phonemes + 5 + 4 + 1

    @property
    def loss_weights(self) -> tuple[float, float, float]:
        return self.alpha_pc, self.alpha_dur, self.alpha_align

    def precision(self):
        return np.float32 if self.dtype == "float32" else np.float64


def _explain(err: ValidationError) -> str:
    first = err.errors()[0]
    key = ".".join(str(p) for p in first.get("loc", ())) or "config"
    if first.get("type") == "extra_forbidden":
        return f"unknown config key: {key}"
    return f"invalid value for {key}: {first.get('msg')}"


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat `key = value` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: missing key")
        values[key] = value
    return values


def build_config(values: dict[str, Any] | None = None) -> Config:
    try:
        return Config(**(values or {}))
    except ValidationError as e:
        raise ConfigError(_explain(e)) from None


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> Config:
    """defaults < config file < overrides (CLI flags) < PAMA_SEED."""
    values: dict[str, Any] = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    env_seed = os.getenv(SEED_ENV)
    if env_seed:
        logger.info("seed overridden by %s=%s", SEED_ENV, env_seed)
        values["seed"] = env_seed
    return build_config(values)


def dump_config(cfg: Config) -> str:
    """Render as a config file that load_config reads back to an equal Config."""
    lines = []
    for key, value in cfg.model_dump().items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
