"""Reconstruction study: learnable (LRNF), random (RNDF) and top (TOPF) frequencies."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.preprocessing import StandardScaler

from jtft.constants import LRNF_LR, LRNF_STEPS, RNDF_SEEDS, SUBSEQUENCE_LEN
from jtft.core.errors import DataError, DivergenceError, ParameterError
from jtft.core.functional import mse_loss
from jtft.core.optim import AdamState, adam_step, zero_grad
from jtft.core.spectral import (
    FrequencySet,
    build_cdct_matrix,
    constrain_frequencies,
    dct_matrix,
    init_frequencies_topk,
)
from jtft.core.tensor import Tape, Tensor, backward, matmul
from jtft.data.dataset import Dataset

logger = logging.getLogger("jtft.reconstruction")

METHODS = ("LRNF", "RNDF", "TOPF")


@dataclass
class ReconstructionReport:
    """Normalized reconstruction error of one method at one k_max."""

    method: str
    k_max: int
    nmse: float
    nmse_std: float | None = None
    seeds: list[int | None] = field(default_factory=list)
    per_seed: list[float] = field(default_factory=list)
    runtime_ms: list[float] = field(default_factory=list)

    @property
    def seed_count(self) -> int:
        return len(self.per_seed)

    def records(self) -> list[dict]:
        """One JSON-lines record per (method, k_max, seed)."""
        return [
            {
                "method": self.method,
                "k_max": self.k_max,
                "seed": seed,
                "nmse": nmse,
                "runtime_ms": ms,
            }
            for seed, nmse, ms in zip(self.seeds, self.per_seed, self.runtime_ms, strict=True)
        ]

    def table_row(self) -> dict:
        return {"method": self.method, "k_max": self.k_max, "nmse": self.nmse, "std": self.nmse_std}


def normalized_mse(reconstruction: np.ndarray, windows: np.ndarray) -> float:
    """Σ‖ẑ − z‖² / Σ‖z‖²."""
    energy = float(np.sum(windows * windows))
    if energy == 0.0:
        return 0.0
    return float(np.sum((reconstruction - windows) ** 2) / energy)


def _as_windows(windows) -> np.ndarray:
    values = windows.data if isinstance(windows, Tensor) else np.asarray(windows, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise DataError(f"Expected a W×N window matrix, got shape {values.shape}")
    return values


def _check_k_max(k_max: int, n: int) -> None:
    if not 1 <= k_max <= n:
        raise ParameterError(f"k_max must be in [1, {n}], got {k_max}")


def _truncated_nmse(windows: np.ndarray, indices: np.ndarray) -> float:
    basis = dct_matrix(windows.shape[1])[indices]
    return normalized_mse((windows @ basis.T) @ basis, windows)


def reconstruct_topf(windows, k_max: int) -> ReconstructionReport:
    """Keep DC plus the top k_max−1 grid frequencies and invert with IDCT."""
    values = _as_windows(windows)
    n = values.shape[1]
    _check_k_max(k_max, n)
    start = time.perf_counter()
    freqs = init_frequencies_topk(values, k_max, learnable=False)
    indices = np.rint(freqs.values * n).astype(int)
    nmse = _truncated_nmse(values, indices)
    elapsed = (time.perf_counter() - start) * 1000.0
    return ReconstructionReport("TOPF", k_max, nmse, None, [None], [nmse], [elapsed])


def reconstruct_rndf(
    windows, k_max: int, seeds: int = RNDF_SEEDS, base_seed: int = 0
) -> ReconstructionReport:
    """Keep DC plus k_max−1 distinct random grid frequencies, once per seed."""
    values = _as_windows(windows)
    n = values.shape[1]
    _check_k_max(k_max, n)
    if seeds < 1:
        raise ParameterError(f"RNDF needs at least one seed, got {seeds}")

    seed_ids, errors, runtimes = [], [], []
    for offset in range(seeds):
        seed = base_seed + offset
        start = time.perf_counter()
        rng = np.random.default_rng(seed)
        chosen = rng.choice(np.arange(1, n), size=k_max - 1, replace=False)
        indices = np.concatenate([[0], np.sort(chosen)]).astype(int)
        errors.append(_truncated_nmse(values, indices))
        runtimes.append((time.perf_counter() - start) * 1000.0)
        seed_ids.append(seed)
    return ReconstructionReport(
        "RNDF", k_max, float(np.mean(errors)), float(np.std(errors)), seed_ids, errors, runtimes
    )


def _reconstruction_loss(z: Tensor, freqs: FrequencySet, recovery: Tensor) -> Tensor:
    basis = build_cdct_matrix(freqs, z.shape[1]).basis
    coeffs = matmul(z, basis.swapaxes(0, 1))
    return mse_loss(matmul(coeffs, recovery.swapaxes(0, 1)), z)


def _least_squares_recovery(values: np.ndarray, freqs: FrequencySet) -> np.ndarray:
    basis = build_cdct_matrix(freqs, values.shape[1]).basis.data
    coeffs = values @ basis.T
    solution, *_ = np.linalg.lstsq(coeffs, values, rcond=None)
    return solution.T


def _recovery_nmse(values: np.ndarray, freqs: FrequencySet, recovery: np.ndarray) -> float:
    basis = build_cdct_matrix(freqs, values.shape[1]).basis.data
    return normalized_mse((values @ basis.T) @ recovery.T, values)


def fit_lrnf(
    windows,
    k_max: int,
    steps: int = LRNF_STEPS,
    rng: np.random.Generator | None = None,
    *,
    lr: float = LRNF_LR,
    batch_size: int | None = None,
    refit: bool = True,
    seed: int | None = None,
) -> tuple[FrequencySet, Tensor, ReconstructionReport]:
    """Jointly learn ψ and a shared recovery matrix N×k_max with Adam.

    ψ starts from the top DCT frequencies and the recovery from T̂ᵀ, which is
    exactly the TOPF reconstruction. The best iterate is kept, and with
    ``refit`` the recovery is finally replaced by its least-squares optimum
    for the learned ψ when that is no worse.
    """
    values = _as_windows(windows)
    count, n = values.shape
    if count < 2:
        raise DataError(f"LRNF needs at least two windows, got {count}")
    if steps < 1:
        raise ParameterError(f"LRNF needs at least one step, got {steps}")
    _check_k_max(k_max, n)
    rng = rng if rng is not None else np.random.default_rng(seed)
    start = time.perf_counter()

    freqs = init_frequencies_topk(values, k_max)
    recovery = Tensor(build_cdct_matrix(freqs, n).basis.data.T, requires_grad=True, name="recovery")
    params = [freqs.psi, recovery]
    state = AdamState(lr=lr)
    z_full = Tensor(values)

    best_loss = np.inf
    best = (freqs.psi.data.copy(), recovery.data.copy())
    for step in range(steps + 1):
        full_loss = float(_reconstruction_loss(z_full, freqs, recovery))
        if not np.isfinite(full_loss):
            raise DivergenceError(
                f"LRNF loss became non-finite at step {step}",
                f"learning rate {lr}",
            )
        if full_loss < best_loss:
            best_loss = full_loss
            best = (freqs.psi.data.copy(), recovery.data.copy())
        if step == steps:
            break

        if batch_size is not None and batch_size < count:
            z = Tensor(values[rng.choice(count, size=batch_size, replace=False)])
        else:
            z = z_full
        with Tape() as tape:
            loss = _reconstruction_loss(z, freqs, recovery)
        zero_grad(params)
        backward(loss, tape)
        adam_step(params, state)
        constrain_frequencies(freqs)
        if step % 500 == 0:
            logger.debug("LRNF k_max=%d step %d loss %.6e", k_max, step, full_loss)

    freqs.psi.data[:] = best[0]
    recovery.data[:] = best[1]
    nmse = _recovery_nmse(values, freqs, recovery.data)
    if refit:
        solved = _least_squares_recovery(values, freqs)
        solved_nmse = _recovery_nmse(values, freqs, solved)
        if solved_nmse <= nmse:
            recovery.data[:] = solved
            nmse = solved_nmse

    elapsed = (time.perf_counter() - start) * 1000.0
    logger.info("LRNF k_max=%d finished: nmse %.6e after %d steps", k_max, nmse, steps)
    report = ReconstructionReport("LRNF", k_max, nmse, None, [seed], [nmse], [elapsed])
    return freqs, recovery, report


def corpus_windows(
    values: np.ndarray, length: int = SUBSEQUENCE_LEN, standardize: bool = True
) -> np.ndarray:
    """Cut every channel of a rows×D array into consecutive non-overlapping windows."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    rows = values.shape[0]
    if rows < length:
        raise DataError(f"Corpus has {rows} rows, shorter than the window length {length}")
    if standardize:
        values = StandardScaler().fit_transform(values)
    per_channel = rows // length
    trimmed = values[: per_channel * length].T
    return trimmed.reshape(-1, length)


def reconstruction_benchmark(
    corpus,
    subsequence_length: int = SUBSEQUENCE_LEN,
    k_max_list: tuple[int, ...] = (4, 8, 16),
    seeds: int = RNDF_SEEDS,
    *,
    lrnf_steps: int = LRNF_STEPS,
    seed: int = 0,
    standardize: bool = True,
) -> list[ReconstructionReport]:
    """Run LRNF, RNDF and TOPF for every k_max on windows cut from ``corpus``."""
    values = corpus.values if isinstance(corpus, Dataset) else corpus
    windows = corpus_windows(values, subsequence_length, standardize)
    logger.info(
        "Reconstruction benchmark: %d windows of length %d, k_max=%s",
        len(windows),
        subsequence_length,
        list(k_max_list),
    )
    reports: list[ReconstructionReport] = []
    for k_max in k_max_list:
        _, _, lrnf = fit_lrnf(windows, k_max, lrnf_steps, np.random.default_rng(seed), seed=seed)
        reports.append(lrnf)
        reports.append(reconstruct_rndf(windows, k_max, seeds, base_seed=seed))
        reports.append(reconstruct_topf(windows, k_max))
        logger.info(
            "k_max=%d: LRNF %.4e RNDF %.4e TOPF %.4e",
            k_max,
            reports[-3].nmse,
            reports[-2].nmse,
            reports[-1].nmse,
        )
    return reports
