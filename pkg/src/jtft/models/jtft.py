"""The JTFT network: normalization, patching, JTFR, CI encoder, LRA and head.

Every stage accepts an optional leading batch axis, so inputs are D×L or B×D×L.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from jtft.constants import NORM_EPS
from jtft.core.errors import ConfigError, DataError, DimensionError
from jtft.core.functional import dropout, gelu
from jtft.core.spectral import (
    CdctMatrix,
    FrequencySet,
    build_cdct_matrix,
    cdct_apply,
    constrain_frequencies,
    init_frequencies_topk,
)
from jtft.core.tensor import Tensor, as_tensor, concat, matmul, take
from jtft.models.config import ModelConfig
from jtft.models.layers import (
    EncoderLayer,
    FeedForward,
    LayerNorm,
    LightweightMultiHeadAttention,
    Linear,
    Module,
    parameter,
)

logger = logging.getLogger("jtft.model")

POSITION_INIT_SCALE = 0.02
STAGES = ("preprocess", "encoder", "lra", "head")


# --- Preprocessing ---


@dataclass
class NormStats:
    """Per-window, per-channel mean and floored population stddev, shape (…, D)."""

    mean: np.ndarray
    std: np.ndarray


def instance_normalize(x, eps: float = NORM_EPS) -> tuple[Tensor, NormStats]:
    values = as_tensor(x).data
    if values.shape[-1] < 2:
        raise DataError(
            f"Instance normalization needs at least 2 time steps, got {values.shape[-1]}"
        )
    mean = values.mean(axis=-1)
    std = np.maximum(values.std(axis=-1), eps)
    normed = (values - mean[..., None]) / std[..., None]
    return Tensor(normed), NormStats(mean=mean, std=std)


def denormalize(y: Tensor, stats: NormStats) -> Tensor:
    """y·std + mean per channel."""
    return as_tensor(y) * stats.std[..., None] + stats.mean[..., None]


@dataclass
class PatchSet:
    patches: Tensor  # (…, D, M, P)
    padded: bool

    @property
    def count(self) -> int:
        return self.patches.shape[-2]


def patch_indices(length: int, patch_len: int, stride: int, padding: bool = True) -> np.ndarray:
    """Source positions (M×P) of every patch; the end patch repeats the last value."""
    if length < patch_len:
        raise DataError(f"Series length {length} is shorter than the patch length {patch_len}")
    count = (length - patch_len) // stride + (2 if padding else 1)
    starts = np.arange(count) * stride
    positions = starts[:, None] + np.arange(patch_len)[None, :]
    return np.minimum(positions, length - 1)


def patchify(x, patch_len: int, stride: int, padding: bool = True) -> PatchSet:
    x = as_tensor(x)
    indices = patch_indices(x.shape[-1], patch_len, stride, padding)
    return PatchSet(patches=take(x, indices, axis=-1), padded=padding)


@dataclass
class Jtfr:
    fd_part: Tensor | None  # (…, D, n_f, P)
    td_part: Tensor | None  # (…, D, n_t, P)
    sequence: Tensor  # (…, D, L̂, P)

    @property
    def seq_len(self) -> int:
        return self.sequence.shape[-2]


def build_jtfr(patches: PatchSet, cdct: CdctMatrix | None, n_t: int) -> Jtfr:
    """[CDCT along the patch axis ; last n_t patches] along the sequence axis."""
    m = patches.count
    if n_t > m:
        raise ConfigError(f"n_t ({n_t}) exceeds the patch count {m}")
    parts = []
    fd = td = None
    if cdct is not None:
        if cdct.length != m:
            raise DimensionError(f"CDCT built for {cdct.length} patches, got {m}")
        # (…, D, M, P) → (…, D, P, M) → CDCT → (…, D, n_f, P)
        fd = cdct_apply(cdct, patches.patches.swapaxes(-1, -2)).swapaxes(-1, -2)
        parts.append(fd)
    if n_t > 0:
        td = patches.patches[..., m - n_t :, :]
        parts.append(td)
    if not parts:
        raise ConfigError("A joint representation needs n_t + n_f >= 1")
    sequence = parts[0] if len(parts) == 1 else concat(parts, axis=-2)
    return Jtfr(fd_part=fd, td_part=td, sequence=sequence)


# --- Network stages ---


class Encoder(Module):
    """Channel-independent Transformer encoder shared by every channel."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.embedding = Linear(cfg.patch_len, cfg.d_m, rng)
        self.position = parameter(
            rng.uniform(-POSITION_INIT_SCALE, POSITION_INIT_SCALE, (cfg.seq_len, cfg.d_m))
        )
        self.layers = [
            EncoderLayer(cfg.d_m, cfg.heads, cfg.ffn_dim, cfg.dropout, rng)
            for _ in range(cfg.encoder_layers)
        ]

    def __call__(
        self, jtfr: Jtfr, training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        if jtfr.seq_len != self.position.shape[0]:
            raise DimensionError(
                f"Sequence length {jtfr.seq_len} does not match the position embedding "
                f"length {self.position.shape[0]}"
            )
        z = self.embedding(jtfr.sequence) + self.position
        for layer in self.layers:
            z = layer(z, training, rng)
        return z


def encoder_forward(
    jtfr: Jtfr,
    encoder: Encoder,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    return encoder(jtfr, training, rng)


class LowRankAttention(Module):
    """Cross-channel layer routing channel messages through d_r router queries.

    B = LMSA(R, Ẑ, Ẑ); Z̄ = W_e·(B + E_pos); Z = LN(Z_in ⊕ Z̄); out = LN(Z + MLP(Z)).
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d_m, d_r = cfg.d_m, cfg.d_r
        self.router = parameter(rng.uniform(-1.0, 1.0, (d_r, d_m)) / np.sqrt(d_m))
        self.lmsa = LightweightMultiHeadAttention(cfg.seq_len * d_m, d_m, cfg.heads, rng)
        self.position = parameter(
            rng.uniform(-POSITION_INIT_SCALE, POSITION_INIT_SCALE, (d_r, d_m))
        )
        self.distribute = parameter(rng.uniform(-1.0, 1.0, (cfg.channels, d_r)) / np.sqrt(d_r))
        self.norm_route = LayerNorm(d_m)
        self.mlp = FeedForward(d_m, cfg.ffn_dim, 0.0, rng)
        self.norm_mlp = LayerNorm(d_m)

    def __call__(self, z_in: Tensor) -> Tensor:
        *lead, channels, seq_len, d_m = z_in.shape
        if channels != self.distribute.shape[0]:
            raise DimensionError(
                f"LRA built for {self.distribute.shape[0]} channels, got {channels}"
            )
        flat = z_in.reshape(*lead, channels, seq_len * d_m)
        routed = self.lmsa(self.router, flat) + self.position  # (…, d_r, d_m)
        messages = matmul(self.distribute, routed)  # (…, D, d_m)
        z = self.norm_route(z_in + messages.reshape(*lead, channels, 1, d_m))
        return self.norm_mlp(z + self.mlp(z))


def lra_layer(z_in: Tensor, layer: LowRankAttention) -> Tensor:
    return layer(z_in)


class PredictionHead(Module):
    """flatten → GELU → dropout → linear to T, then denormalize."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.proj = Linear(cfg.seq_len * cfg.d_m, cfg.horizon, rng)
        self._p = cfg.dropout

    def __call__(
        self,
        z: Tensor,
        stats: NormStats,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        *lead, channels, seq_len, d_m = z.shape
        hidden = dropout(gelu(z.reshape(*lead, channels, seq_len * d_m)), self._p, rng, training)
        return denormalize(self.proj(hidden), stats)


def prediction_head(
    z: Tensor,
    head: PredictionHead,
    stats: NormStats,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    return head(z, stats, training, rng)


# --- Full model ---


@contextmanager
def _stage(timings: dict[str, float] | None, name: str) -> Iterator[None]:
    if timings is None:
        yield
        return
    start = time.perf_counter()
    yield
    timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


class JTFTModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self._cfg = cfg
        self.frequencies = FrequencySet.grid(cfg.n_f, cfg.patch_count) if cfg.n_f > 0 else None
        self.encoder = Encoder(cfg, rng)
        self.lra = [LowRankAttention(cfg, rng) for _ in range(cfg.lra_layers)]
        self.head = PredictionHead(cfg, rng)
        logger.debug(
            "Built JTFT: D=%d L=%d T=%d M=%d L_hat=%d, %d parameters",
            cfg.channels,
            cfg.lookback,
            cfg.horizon,
            cfg.patch_count,
            cfg.seq_len,
            sum(p.size for p in self.parameters()),
        )

    @property
    def cfg(self) -> ModelConfig:
        return self._cfg

    def preprocess(self, x: Tensor) -> tuple[Jtfr, NormStats]:
        cfg = self._cfg
        normed, stats = instance_normalize(x)
        patches = patchify(normed, cfg.patch_len, cfg.stride, cfg.padding_patch)
        cdct = (
            build_cdct_matrix(self.frequencies, patches.count)
            if self.frequencies is not None
            else None
        )
        return build_jtfr(patches, cdct, cfg.n_t), stats

    def forward(
        self,
        x,
        training: bool = False,
        rng: np.random.Generator | None = None,
        timings: dict[str, float] | None = None,
    ) -> Tensor:
        cfg = self._cfg
        x = as_tensor(x)
        if x.ndim not in (2, 3) or x.shape[-2:] != (cfg.channels, cfg.lookback):
            raise DimensionError(
                f"Expected input (…, {cfg.channels}, {cfg.lookback}), got {x.shape}"
            )
        with _stage(timings, "preprocess"):
            jtfr, stats = self.preprocess(x)
        with _stage(timings, "encoder"):
            z = encoder_forward(jtfr, self.encoder, training, rng)
        with _stage(timings, "lra"):
            for layer in self.lra:
                z = lra_layer(z, layer)
        with _stage(timings, "head"):
            return prediction_head(z, self.head, stats, training, rng)

    __call__ = forward

    def init_frequencies(self, windows: np.ndarray) -> None:
        """Top-k DCT initialization of ψ from look-back windows (…, D, L).

        Windows are instance-normalized and patchified with the model's (P, S);
        each (channel, intra-patch coordinate) sequence along the patch axis is
        one DCT window of length M.
        """
        if self.frequencies is None:
            return
        cfg = self._cfg
        normed, _ = instance_normalize(np.asarray(windows, dtype=np.float64))
        patches = patchify(normed, cfg.patch_len, cfg.stride, cfg.padding_patch).patches.data
        corpus = np.swapaxes(patches, -1, -2).reshape(-1, patches.shape[-2])
        init = init_frequencies_topk(corpus, cfg.n_f, learnable=False)
        self.frequencies.psi.data[:] = init.values
        constrain_frequencies(self.frequencies)
        logger.info(
            "Initialized %d frequencies from %d sequences: %s",
            cfg.n_f,
            len(corpus),
            np.round(init.values, 4).tolist(),
        )

    def constrain_frequencies(self) -> None:
        if self.frequencies is not None:
            constrain_frequencies(self.frequencies)


def model_forward(
    model: JTFTModel,
    x,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    return model.forward(x, training, rng)
