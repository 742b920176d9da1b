"""DCT/IDCT and the customized DCT with learnable frequencies."""

from __future__ import annotations

import functools
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from jtft.constants import FREQ_DUPLICATE_TOL, FREQ_MAX, FREQ_MIN, FREQ_NUDGE
from jtft.core.errors import DimensionError, ParameterError
from jtft.core.tensor import Tensor, apply_op, as_tensor, matmul

logger = logging.getLogger("jtft.spectral")


@functools.lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix T̃ of size n×n (read-only, cached)."""
    if n < 1:
        raise DimensionError(f"DCT length must be positive, got {n}")
    k = np.arange(n)[:, None]
    grid = np.arange(n)[None, :] + 0.5
    matrix = math.sqrt(2.0 / n) * np.cos(np.pi / n * grid * k)
    matrix[0, :] = 1.0 / math.sqrt(n)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class DctBasis:
    size: int
    matrix: Tensor

    @classmethod
    def of(cls, n: int) -> DctBasis:
        return cls(size=n, matrix=Tensor(dct_matrix(n)))


def _contract_trailing(z: Tensor, basis: Tensor) -> Tensor:
    """Apply ``basis`` (k×N) to the trailing axis of ``z`` (…×N), giving …×k."""
    lead = z.shape[:-1]
    flat = z.reshape(-1, z.shape[-1])
    out = matmul(flat, basis.swapaxes(0, 1))
    return out.reshape(*lead, basis.shape[0])


def _require_nonempty(z: Tensor, op: str) -> None:
    if z.ndim == 0 or z.size == 0:
        raise DimensionError(f"{op} needs a non-empty input, got shape {z.shape}")


def dct(z: Tensor) -> Tensor:
    """z̃ = T̃z along the trailing axis."""
    z = as_tensor(z)
    _require_nonempty(z, "dct")
    return _contract_trailing(z, DctBasis.of(z.shape[-1]).matrix)


def idct(coeffs: Tensor) -> Tensor:
    """z = T̃ᵀz̃ along the trailing axis."""
    coeffs = as_tensor(coeffs)
    _require_nonempty(coeffs, "idct")
    return _contract_trailing(coeffs, DctBasis.of(coeffs.shape[-1]).matrix.swapaxes(0, 1))


# --- Learnable frequencies ---


@dataclass
class FrequencySet:
    """Frequency coefficients Ψ = {0, ψ₁, …, ψ_{k_max−1}}, ψ₀ pinned at zero."""

    psi: Tensor
    learnable: bool = True

    @property
    def k_max(self) -> int:
        return self.psi.shape[0]

    @property
    def values(self) -> np.ndarray:
        return self.psi.data

    @classmethod
    def from_values(cls, values, learnable: bool = True) -> FrequencySet:
        psi = Tensor(np.asarray(values, dtype=np.float64).reshape(-1), requires_grad=learnable)
        psi.name = "psi"
        return cls(psi=psi, learnable=learnable)

    @classmethod
    def grid(cls, k_max: int, n: int, learnable: bool = True) -> FrequencySet:
        """The first ``k_max`` DCT grid frequencies k/n."""
        return cls.from_values(np.arange(k_max) / n, learnable)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        if self.learnable:
            yield f"{prefix}psi", self.psi


@dataclass
class CdctMatrix:
    """Basis T̂ (k_max×N) built from a frequency set."""

    basis: Tensor
    freqs: FrequencySet
    length: int


def _cosine_basis(psi: Tensor, n: int) -> Tensor:
    grid = (np.arange(n) + 0.5) * np.pi
    scale = math.sqrt(2.0 / n)
    phase = psi.data[:, None] * grid[None, :]
    data = scale * np.cos(phase)
    data[0, :] = 1.0 / math.sqrt(n)

    def _backward(g: np.ndarray):
        # ∂T̂[k,n]/∂ψ_k = −√(2/N)·(n+½)π·sin((n+½)πψ_k); row 0 is constant
        dpsi = -scale * (g * grid[None, :] * np.sin(phase)).sum(axis=1)
        dpsi[0] = 0.0
        return (dpsi,)

    return apply_op(data, (psi,), _backward)


def build_cdct_matrix(freqs: FrequencySet, n: int) -> CdctMatrix:
    """Build T̂ with rows 1/√N and √(2/N)·cos((n+½)πψ_k), differentiable in ψ."""
    if freqs.k_max < 1:
        raise ParameterError("A frequency set needs at least the DC coefficient")
    if n < 1:
        raise DimensionError(f"CDCT length must be positive, got {n}")
    tail = freqs.values[1:]
    if np.any((tail <= 0.0) | (tail >= 1.0)):
        raise ParameterError(
            "Frequency coefficients must lie in (0, 1) for k >= 1",
            f"psi={freqs.values.tolist()}",
        )
    if n < freqs.k_max:
        logger.warning("CDCT length %d is shorter than k_max %d", n, freqs.k_max)
    return CdctMatrix(basis=_cosine_basis(freqs.psi, n), freqs=freqs, length=n)


def cdct_apply(matrix: CdctMatrix, z: Tensor) -> Tensor:
    """ẑ = T̂z along the trailing axis; gradients reach both z and ψ."""
    z = as_tensor(z)
    if z.ndim == 0 or z.shape[-1] != matrix.length:
        raise DimensionError(
            f"CDCT built for length {matrix.length}, input has shape {z.shape}",
        )
    return _contract_trailing(z, matrix.basis)


def _windows_array(windows) -> np.ndarray:
    values = windows.data if isinstance(windows, Tensor) else np.asarray(windows, dtype=np.float64)
    if values.ndim == 0 or values.size == 0:
        raise DimensionError("Need at least one non-empty window")
    return values.reshape(-1, values.shape[-1])


def rank_grid_frequencies(windows) -> np.ndarray:
    """Grid indices 1…N−1 ordered by mean |DCT coefficient|, ties toward lower k."""
    values = _windows_array(windows)
    coeffs = np.abs(values @ dct_matrix(values.shape[-1]).T).mean(axis=0)
    scale = max(float(coeffs.max()), np.finfo(np.float64).tiny)
    # Rounding makes numerically-zero coefficients tie exactly.
    score = np.round(coeffs[1:] / scale, 12)
    return np.argsort(-score, kind="stable") + 1


def init_frequencies_topk(training_windows, k_max: int, learnable: bool = True) -> FrequencySet:
    """ψ = {0} ∪ {k/N for the top k_max−1 grid frequencies}, sorted ascending."""
    values = _windows_array(training_windows)
    n = values.shape[-1]
    if not 1 <= k_max <= n:
        raise ParameterError(f"k_max must be in [1, {n}], got {k_max}")
    top = np.sort(rank_grid_frequencies(values)[: k_max - 1])
    freqs = FrequencySet.from_values(np.concatenate([[0.0], top / n]), learnable)
    logger.debug("Initialized %d frequencies from %d windows: %s", k_max, len(values), top)
    return freqs


def constrain_frequencies(freqs: FrequencySet) -> None:
    """Clamp ψ_k (k ≥ 1) into [1e-3, 1−1e-3], pin ψ₀ = 0 and separate duplicates."""
    psi = freqs.psi.data
    psi[0] = 0.0
    if freqs.k_max < 2:
        return
    np.clip(psi[1:], FREQ_MIN, FREQ_MAX, out=psi[1:])
    order = np.argsort(psi[1:], kind="stable") + 1
    for prev, cur in zip(order[:-1], order[1:], strict=True):
        if psi[cur] - psi[prev] < FREQ_DUPLICATE_TOL:
            if psi[prev] + FREQ_NUDGE <= FREQ_MAX:
                psi[cur] = psi[prev] + FREQ_NUDGE
            else:
                psi[prev] = psi[cur] - FREQ_NUDGE
            logger.debug("Separated near-duplicate frequencies at %.9f", psi[cur])
