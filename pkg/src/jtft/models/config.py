"""Network configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from jtft.constants import (
    DEFAULT_D_MODEL,
    DEFAULT_DROPOUT,
    DEFAULT_ENCODER_LAYERS,
    DEFAULT_HEADS,
    DEFAULT_LRA_LAYERS,
    DEFAULT_N_F,
    DEFAULT_N_T,
    DEFAULT_PATCH_LEN,
    DEFAULT_ROUTER_LEN,
    DEFAULT_STRIDE,
    ILI_LOOKBACKS,
    ILI_PATCH,
    STANDARD_PATCH,
)
from jtft.core.errors import ConfigError


def patch_count(lookback: int, patch_len: int, stride: int, padding: bool = True) -> int:
    """M = ⌊(L−P)/S⌋ + 1, plus one replicated end patch when padding."""
    return (lookback - patch_len) // stride + (2 if padding else 1)


def patch_preset(lookback: int) -> tuple[int, int]:
    """(patch_len, stride) used for a look-back: (4, 2) for the short ILI windows, else (16, 8)."""
    return ILI_PATCH if lookback in ILI_LOOKBACKS else STANDARD_PATCH


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 336
    horizon: int = 96
    channels: int = 1
    patch_len: int = DEFAULT_PATCH_LEN
    stride: int = DEFAULT_STRIDE
    n_t: int = DEFAULT_N_T
    n_f: int = DEFAULT_N_F
    d_m: int = DEFAULT_D_MODEL
    heads: int = DEFAULT_HEADS
    encoder_layers: int = DEFAULT_ENCODER_LAYERS
    ffn_width: int | None = None  # defaults to 2·d_m
    lra_layers: int = DEFAULT_LRA_LAYERS
    d_r: int = DEFAULT_ROUTER_LEN
    dropout: float = DEFAULT_DROPOUT
    padding_patch: bool = True

    def __post_init__(self) -> None:
        positive = ("lookback", "horizon", "channels", "patch_len", "stride", "d_m", "heads", "d_r")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        for name in ("n_t", "n_f", "encoder_layers", "lra_layers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"model.{name} must be >= 0, got {getattr(self, name)}")
        if self.ffn_width is not None and self.ffn_width < 1:
            raise ConfigError(f"model.ffn_width must be >= 1, got {self.ffn_width}")
        if self.d_m % self.heads:
            raise ConfigError(
                f"model.d_m ({self.d_m}) must be divisible by model.heads ({self.heads})"
            )
        if self.lookback < self.patch_len:
            raise ConfigError(
                f"model.lookback ({self.lookback}) is shorter than "
                f"model.patch_len ({self.patch_len})"
            )
        m = self.patch_count
        if self.n_t > m:
            raise ConfigError(f"model.n_t ({self.n_t}) exceeds the patch count {m}")
        if self.n_f > m:
            raise ConfigError(f"model.n_f ({self.n_f}) exceeds the patch count {m}")
        if self.seq_len < 1:
            raise ConfigError("model.n_t + model.n_f must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"model.dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_m // self.heads

    @property
    def ffn_dim(self) -> int:
        return self.ffn_width if self.ffn_width is not None else 2 * self.d_m

    @property
    def patch_count(self) -> int:
        return patch_count(self.lookback, self.patch_len, self.stride, self.padding_patch)

    @property
    def seq_len(self) -> int:
        """L̂ = n_t + n_f, independent of the look-back."""
        return self.n_t + self.n_f

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown model settings: {', '.join(unknown)}")
        return cls(**values)
