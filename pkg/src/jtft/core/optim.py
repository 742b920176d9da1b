"""Adam optimizer over tensors with populated gradient slots."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from jtft.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_LR
from jtft.core.errors import UsageError
from jtft.core.tensor import Tensor

logger = logging.getLogger("jtft.optim")


@dataclass
class AdamState:
    """Moment accumulators and hyperparameters for one parameter list."""

    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def zero_grad(params: Sequence[Tensor]) -> None:
    """Reset every gradient slot to zeros so backward can accumulate into it."""
    for p in params:
        p.grad = np.zeros_like(p.data)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """Apply one bias-corrected Adam update, then clear the gradients."""
    missing = [p.name or f"#{i}" for i, p in enumerate(params) if p.grad is None]
    if missing:
        raise UsageError(f"adam_step called before gradients were populated for {missing}")

    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    elif len(state.first_moment) != len(params):
        raise UsageError(
            f"Optimizer state tracks {len(state.first_moment)} parameters, got {len(params)}"
        )

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, m, v in zip(params, state.first_moment, state.second_moment, strict=True):
        if m.shape != p.data.shape:
            raise UsageError(f"Accumulator shape {m.shape} does not match parameter {p.shape}")
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.grad = None
