"""Reverse-mode automatic differentiation over dense float64 arrays."""

from __future__ import annotations

import contextvars
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from jtft.core.errors import DimensionError, UsageError

logger = logging.getLogger("jtft.tensor")

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE_TAPE: contextvars.ContextVar[Tape | None] = contextvars.ContextVar(
    "jtft_active_tape", default=None
)


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient slot.

    Values are treated as immutable once an op has consumed them; only ``grad``
    is written, and only by :func:`backward` or the optimizer.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_ufunc__ = None  # ndarray <op> Tensor dispatches to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str = "") -> None:
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> Tensor:
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.requires_grad = requires_grad
        out.name = ""
        return out

    # --- Introspection ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def is_finite(self) -> bool:
        """True when no value is NaN or infinite."""
        return bool(np.isfinite(self.data).all())

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # --- Arithmetic ---

    def __add__(self, other) -> Tensor:
        return add(self, other)

    def __radd__(self, other) -> Tensor:
        return add(other, self)

    def __sub__(self, other) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other) -> Tensor:
        return sub(other, self)

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other) -> Tensor:
        return div(self, other)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, index) -> Tensor:
        return getitem(self, index)

    # --- Shape ops ---

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple | list):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, axis1: int, axis2: int) -> Tensor:
        return swapaxes(self, axis1, axis2)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return tensor_mean(self, axis, keepdims)


def as_tensor(value) -> Tensor:
    """Return ``value`` unchanged if it is a Tensor, else wrap it as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


# --- Tape ---


@dataclass
class TapeEntry:
    """One recorded operation: its output, inputs and backward rule."""

    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Ordered record of differentiable operations.

    Entries are appended as ops execute, so every entry's inputs were produced
    either before it on the tape or outside it (leaves). Use as a context
    manager; the active tape is context-local, so worker threads each own one.
    """

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self._token: contextvars.Token | None = None

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> None:
        self.entries.append(TapeEntry(output, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> Tape:
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def apply_op(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result and record it on the active tape when gradients are needed."""
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad)
    if requires_grad:
        tape = _ACTIVE_TAPE.get()
        if tape is not None:
            tape.record(out, inputs, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into the ``grad`` slot of every leaf on the tape.

    Leaves are tensors with ``requires_grad`` that no tape entry produced
    (parameters). Gradients add onto whatever the slot already holds, so
    replaying the same tape twice without zeroing doubles them.
    """
    if loss.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")

    produced = {id(entry.output) for entry in tape.entries}
    if id(loss) not in produced and not loss.requires_grad:
        raise UsageError("Loss was not produced by an operation recorded on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if id(loss) not in produced:
        leaves[id(loss)] = loss

    for entry in reversed(tape.entries):
        upstream = grads.pop(id(entry.output), None)
        if upstream is None:
            continue
        input_grads = entry.backward(upstream)
        for tensor, grad in zip(entry.inputs, input_grads, strict=True):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key not in produced:
                leaves.setdefault(key, tensor)
            grads[key] = grads[key] + grad if key in grads else grad

    for key, leaf in leaves.items():
        grad = grads.get(key)
        if grad is None:
            continue
        if leaf.grad is None:
            leaf.grad = np.array(grad, dtype=np.float64)
        else:
            leaf.grad = leaf.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# --- Elementwise ---


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply_op(a.data + b.data, (a, b), _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return apply_op(a.data - b.data, (a, b), _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply_op(a.data * b.data, (a, b), _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g: np.ndarray):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return apply_op(a.data / b.data, (a, b), _backward)


# --- Linear algebra ---


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes.

    Backward accumulates g·bᵀ into ``a`` and aᵀ·g into ``b``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} @ {b.shape}",
        )

    def _backward(g: np.ndarray):
        grad_a = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        grad_b = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return grad_a, grad_b

    return apply_op(a.data @ b.data, (a, b), _backward)


# --- Shape ---


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"Cannot reshape {a.shape} to {shape}", str(e)) from e

    def _backward(g: np.ndarray):
        return (g.reshape(a.shape),)

    return apply_op(data, (a,), _backward)


def swapaxes(a: Tensor, axis1: int, axis2: int) -> Tensor:
    def _backward(g: np.ndarray):
        return (np.swapaxes(g, axis1, axis2),)

    return apply_op(np.swapaxes(a.data, axis1, axis2), (a,), _backward)


def getitem(a: Tensor, index) -> Tensor:
    """Basic indexing (ints, slices, Ellipsis). Use :func:`take` for index arrays."""
    parts = index if isinstance(index, tuple) else (index,)
    if any(isinstance(p, np.ndarray | list) for p in parts):
        raise UsageError("getitem supports basic indexing only; use take() for index arrays")

    def _backward(g: np.ndarray):
        grad = np.zeros_like(a.data)
        grad[index] = g
        return (grad,)

    return apply_op(a.data[index], (a,), _backward)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis`` with an integer index array of any shape."""
    indices = np.asarray(indices, dtype=np.intp)
    ax = axis % a.ndim

    def _backward(g: np.ndarray):
        grad = np.zeros_like(a.data)
        flat_shape = a.shape[:ax] + (indices.size,) + a.shape[ax + 1 :]
        moved = np.moveaxis(g.reshape(flat_shape), ax, 0)
        np.add.at(np.moveaxis(grad, ax, 0), indices.ravel(), moved)
        return (grad,)

    return apply_op(np.take(a.data, indices, axis=ax), (a,), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError("concat shapes disagree", str(e)) from e
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return apply_op(data, tensors, _backward)


# --- Reductions ---


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def _backward(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return apply_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), _backward)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return tensor_sum(a, axis, keepdims) * (1.0 / count)
