"""Model configuration and its plain-text key=value form."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError

_PRECISIONS = ("single", "double")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the encoder family.

    offsets is one group offset per head; None means all zeros. ffn_hidden of
    None resolves to 4 * embed_dim. Both are stored resolved, so two configs
    compare equal exactly when they produce identical models.
    """

    embed_dim: int = 64
    head_count: int = 4
    group_size: int = 3
    offsets: tuple[int, ...] | None = None
    block_count: int = 1
    ffn_hidden: int | None = None
    dropout_keep: float = 0.7
    max_question_len: int = 16
    max_answer_len: int = 16
    scale_override: float | None = None
    precision: str = "single"
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.head_count < 1:
            raise ConfigError("embed_dim and head_count must be positive")
        if self.embed_dim % self.head_count != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by head_count {self.head_count}")
        if self.group_size < 1:
            raise ConfigError(f"group_size must be >= 1, got {self.group_size}")
        if self.offsets is None:
            object.__setattr__(self, "offsets", (0,) * self.head_count)
        else:
            object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if len(self.offsets) != self.head_count:
            raise ConfigError(
                f"{len(self.offsets)} offsets for {self.head_count} heads")
        for o in self.offsets:
            if not (0 <= o < self.group_size):
                raise ConfigError(f"offset {o} outside [0, group_size={self.group_size})")
        if self.block_count < 1:
            raise ConfigError(f"block_count must be >= 1, got {self.block_count}")
        if self.ffn_hidden is None:
            object.__setattr__(self, "ffn_hidden", 4 * self.embed_dim)
        if self.ffn_hidden < 1:
            raise ConfigError(f"ffn_hidden must be >= 1, got {self.ffn_hidden}")
        if not (0.0 < self.dropout_keep <= 1.0):
            raise ConfigError(f"dropout_keep must be in (0, 1], got {self.dropout_keep}")
        if self.max_question_len < 1 or self.max_answer_len < 1:
            raise ConfigError("max sequence lengths must be >= 1")
        if self.scale_override is not None and not self.scale_override > 0:
            raise ConfigError(f"scale_override must be positive, got {self.scale_override}")
        if self.precision not in _PRECISIONS:
            raise ConfigError(f"precision must be one of {_PRECISIONS}, got {self.precision!r}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.head_count

    @property
    def np_dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    @property
    def attention_scale(self) -> float:
        if self.scale_override is not None:
            return float(self.scale_override)
        return float(np.sqrt(self.head_dim))

    def to_kv_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "offsets":
                text = ",".join(str(o) for o in value)
            elif value is None:
                text = "none"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"


_INT_KEYS = ("embed_dim", "head_count", "group_size", "block_count", "ffn_hidden",
             "max_question_len", "max_answer_len", "seed")
_FLOAT_KEYS = ("dropout_keep", "scale_override")


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key=value` lines; blank lines and # comments are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_kv_text(text: str) -> ModelConfig:
    """Build a ModelConfig from key=value text; unset keys take defaults."""
    pairs = parse_kv_text(text)
    known = {f.name for f in fields(ModelConfig)}
    kwargs = {}
    for key, value in pairs.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key == "offsets":
                kwargs[key] = None if value == "none" else tuple(
                    int(v) for v in value.split(",") if v != "")
            elif key == "precision":
                kwargs[key] = value
            elif key in _FLOAT_KEYS:
                kwargs[key] = None if value == "none" else float(value)
            elif key in _INT_KEYS:
                kwargs[key] = None if (key == "ffn_hidden" and value == "none") else int(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return ModelConfig(**kwargs)
