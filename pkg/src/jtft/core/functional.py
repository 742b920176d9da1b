"""Differentiable neural-network primitives with fused backward rules."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import erf

from jtft.constants import LAYER_NORM_EPS
from jtft.core.errors import DimensionError, ParameterError
from jtft.core.tensor import Tensor, apply_op, as_tensor, matmul

logger = logging.getLogger("jtft.functional")

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

__all__ = [
    "dropout",
    "gelu",
    "layer_norm",
    "mae_metric",
    "matmul",
    "mse_loss",
    "softmax_rows",
]


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def _backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return apply_op(out, (a,), _backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each vector along the last axis, then apply gain and bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm last dimension {d} does not match gain {gain.shape} / bias {bias.shape}"
        )
    centered = a.data - a.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gain.data + bias.data

    def _backward(g: np.ndarray):
        g_normed = g * gain.data
        grad_a = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return grad_a, (g * normed).sum(axis=lead), g.sum(axis=lead)

    return apply_op(out, (a, gain, bias), _backward)


def _gaussian_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2))


def _gelu_derivative(x: np.ndarray) -> np.ndarray:
    return _gaussian_cdf(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU, x·Φ(x) with the erf-based Gaussian CDF."""
    a = as_tensor(a)

    def _backward(g: np.ndarray):
        return (g * _gelu_derivative(a.data),)

    return apply_op(a.data * _gaussian_cdf(a.data), (a,), _backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"Dropout probability must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ParameterError("Dropout in training mode needs a random generator")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def _backward(g: np.ndarray):
        return (g * mask,)

    return apply_op(a.data * mask, (a,), _backward)


def _check_same_shape(pred: Tensor, target: Tensor, what: str) -> None:
    if pred.shape != target.shape:
        raise DimensionError(f"{what}: prediction {pred.shape} vs target {target.shape}")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared elementwise differences, as a scalar tensor."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    scale = 2.0 / diff.size

    def _backward(g: np.ndarray):
        grad = g * scale * diff
        return grad, -grad

    return apply_op(np.mean(diff * diff), (pred, target), _backward)


def mae_metric(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference, as a scalar tensor."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_shape(pred, target, "mae_metric")
    diff = pred.data - target.data

    def _backward(g: np.ndarray):
        grad = g * np.sign(diff) / diff.size
        return grad, -grad

    return apply_op(np.mean(np.abs(diff)), (pred, target), _backward)
