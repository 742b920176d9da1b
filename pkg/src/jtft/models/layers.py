"""Parameterized building blocks: linear maps, LayerNorm, attention, FFN."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator

import numpy as np

from jtft.core.errors import ConfigError, DimensionError, UsageError
from jtft.core.functional import dropout, gelu, layer_norm, softmax_rows
from jtft.core.tensor import Tensor, as_tensor, matmul

logger = logging.getLogger("jtft.layers")


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Container that discovers its parameters from instance attributes.

    Attributes holding a learnable Tensor, a Module, a list of Modules, or any
    object with ``named_parameters(prefix)`` contribute, in assignment order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{attr}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise UsageError(
                "State does not match the model parameters",
                f"missing={missing} unexpected={unexpected}",
            )
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(
                    f"Parameter {name}: stored shape {value.shape}, model {p.shape}"
                )
            p.data[...] = value


def _walk(value, path: str) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{path}.")
    elif isinstance(value, list | tuple):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")
    elif hasattr(value, "named_parameters"):
        yield from value.named_parameters(f"{path}.")


class Linear(Module):
    """y = x·W + b with W of shape in×out, initialized uniform in ±1/√in."""

    def __init__(
        self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True
    ):
        bound = 1.0 / math.sqrt(in_features)
        self.weight = parameter(rng.uniform(-bound, bound, (in_features, out_features)))
        self.bias = parameter(rng.uniform(-bound, bound, out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class FeedForward(Module):
    """affine → GELU → dropout → affine."""

    def __init__(self, dim: int, hidden: int, p: float, rng: np.random.Generator):
        self.inner = Linear(dim, hidden, rng)
        self.outer = Linear(hidden, dim, rng)
        self._p = p

    def __call__(
        self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        hidden = dropout(gelu(self.inner(x)), self._p, rng, training)
        return self.outer(hidden)


# --- Attention ---


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Softmax(QKᵀ/√d_k)·V over the last two axes, leading axes broadcast."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"Query width {q.shape[-1]} does not match key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax_rows(scores), v)


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(…, l, h·d_k) → (…, h, l, d_k)."""
    *lead, length, width = x.shape
    if width % heads:
        raise ConfigError(f"Width {width} cannot be split into {heads} heads")
    return x.reshape(*lead, length, heads, width // heads).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """(…, h, l, d_k) → (…, l, h·d_k)."""
    *lead, heads, length, dk = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, length, heads * dk)


class MultiHeadAttention(Module):
    def __init__(self, d_m: int, heads: int, rng: np.random.Generator):
        if d_m % heads:
            raise ConfigError(f"d_m ({d_m}) must be divisible by heads ({heads})")
        self._heads = heads
        self.query = Linear(d_m, d_m, rng)
        self.key = Linear(d_m, d_m, rng)
        self.value = Linear(d_m, d_m, rng)
        self.out = Linear(d_m, d_m, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self._heads
        context = attention(
            split_heads(self.query(x), h),
            split_heads(self.key(x), h),
            split_heads(self.value(x), h),
        )
        return self.out(merge_heads(context))


class EncoderLayer(Module):
    """Post-norm block: x → LN(x + drop(MSA(x))) → LN(· + drop(FFN(·)))."""

    def __init__(self, d_m: int, heads: int, ffn_dim: int, p: float, rng: np.random.Generator):
        self.attn = MultiHeadAttention(d_m, heads, rng)
        self.norm_attn = LayerNorm(d_m)
        self.ffn = FeedForward(d_m, ffn_dim, p, rng)
        self.norm_ffn = LayerNorm(d_m)
        self._p = p

    def __call__(
        self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None
    ) -> Tensor:
        x = self.norm_attn(x + dropout(self.attn(x), self._p, rng, training))
        return self.norm_ffn(x + dropout(self.ffn(x, training, rng), self._p, rng, training))


def lmsa(
    q_hat: Tensor, k_hat: Tensor, v_hat: Tensor, w_kv: Tensor, w_o: Tensor, heads: int
) -> Tensor:
    """Lightweight multi-head attention.

    Queries are used unprojected, sliced into ``heads`` column blocks; keys and
    values share one projection ``w_kv`` (d_in × h·d_k) whose column block i is
    head i's projection. Heads are concatenated and mapped by ``w_o``.
    """
    q_hat, k_hat, v_hat = as_tensor(q_hat), as_tensor(k_hat), as_tensor(v_hat)
    width = q_hat.shape[-1]
    if width % heads:
        raise ConfigError(f"Query width {width} cannot be split into {heads} heads")
    if w_kv.shape[-1] != width:
        raise DimensionError(f"Key/value projection width {w_kv.shape[-1]} != query width {width}")
    if k_hat.shape[-1] != w_kv.shape[0]:
        raise DimensionError(
            f"Keys have width {k_hat.shape[-1]}, projection expects {w_kv.shape[0]}"
        )
    keys = split_heads(matmul(k_hat, w_kv), heads)
    values = keys if v_hat is k_hat else split_heads(matmul(v_hat, w_kv), heads)
    context = attention(split_heads(q_hat, heads), keys, values)
    return matmul(merge_heads(context), w_o)


class LightweightMultiHeadAttention(Module):
    """LMSA with its shared key/value projection and output map as parameters."""

    def __init__(self, d_in: int, d_m: int, heads: int, rng: np.random.Generator):
        if d_m % heads:
            raise ConfigError(f"d_m ({d_m}) must be divisible by heads ({heads})")
        bound_kv = 1.0 / math.sqrt(d_in)
        bound_o = 1.0 / math.sqrt(d_m)
        self._heads = heads
        self.w_kv = parameter(rng.uniform(-bound_kv, bound_kv, (d_in, d_m)))
        self.w_o = parameter(rng.uniform(-bound_o, bound_o, (d_m, d_m)))

    def __call__(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        return lmsa(queries, keys_values, keys_values, self.w_kv, self.w_o, self._heads)
