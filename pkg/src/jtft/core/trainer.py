"""Training loop, evaluation and the repeat-last-value baseline."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from jtft.constants import (
    ADAM_LR,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_PATIENCE,
    DEFAULT_SEED,
    EVAL_BATCH_SIZE,
    FREQ_INIT_MAX_WINDOWS,
)
from jtft.core.errors import ConfigError, DivergenceError
from jtft.core.functional import mse_loss
from jtft.core.optim import AdamState, adam_step, zero_grad
from jtft.core.tensor import Tape, Tensor, backward
from jtft.data.dataset import DatasetSplits, SplitView, Standardizer, WindowSet, make_windows
from jtft.models.config import ModelConfig
from jtft.models.jtft import JTFTModel

logger = logging.getLogger("jtft.trainer")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    lr: float = ADAM_LR
    patience: int = DEFAULT_PATIENCE
    seed: int = DEFAULT_SEED
    max_batches_per_epoch: int | None = None
    window_stride: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"train.patience must be >= 1, got {self.patience}")
        if self.max_batches_per_epoch is not None and self.max_batches_per_epoch < 1:
            raise ConfigError(
                f"train.max_batches_per_epoch must be >= 1, got {self.max_batches_per_epoch}"
            )
        if self.window_stride < 1:
            raise ConfigError(f"train.window_stride must be >= 1, got {self.window_stride}")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class MetricsReport:
    dataset: str
    horizon: int
    split: str
    mse: float
    mae: float
    epoch: int | None = None
    seconds: float = 0.0
    fingerprint: str = ""
    train_loss: float | None = None

    def to_record(self, include_timing: bool = False) -> dict:
        record = asdict(self)
        if not include_timing:
            record.pop("seconds")
        return record


def config_fingerprint(model_cfg: ModelConfig, train_cfg: TrainConfig, **extra) -> str:
    """Short stable hash of everything that determines a run."""
    payload = {"model": model_cfg.to_dict(), "train": asdict(train_cfg), **extra}
    encoded = json.dumps(payload, sort_keys=True, default=list).encode()
    return hashlib.sha256(encoded).hexdigest()[:16]


@dataclass
class TrainResult:
    model: JTFTModel
    history: list[MetricsReport] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_mse: float | None = None


# --- Scoring ---


@dataclass
class _ErrorSums:
    squared: float = 0.0
    absolute: float = 0.0
    count: int = 0

    def add(self, pred: np.ndarray, target: np.ndarray) -> None:
        diff = pred - target
        self.squared += float(np.sum(diff * diff))
        self.absolute += float(np.sum(np.abs(diff)))
        self.count += diff.size

    @property
    def mse(self) -> float:
        return self.squared / self.count

    @property
    def mae(self) -> float:
        return self.absolute / self.count


def score_predictions(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    """(MSE, MAE) of two equally shaped arrays."""
    sums = _ErrorSums()
    sums.add(np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64))
    return sums.mse, sums.mae


def _batches(count: int, batch_size: int) -> list[np.ndarray]:
    return [
        np.arange(start, min(start + batch_size, count)) for start in range(0, count, batch_size)
    ]


def evaluate(
    model: JTFTModel,
    view: SplitView,
    *,
    dataset: str = "",
    batch_size: int = EVAL_BATCH_SIZE,
    raw_scale: bool = False,
    standardizer: Standardizer | None = None,
    window_stride: int = 1,
    epoch: int | None = None,
    fingerprint: str = "",
) -> MetricsReport:
    """Mean MSE/MAE over every window of ``view`` with dropout off.

    Errors are summed over batches before dividing, so the result does not
    depend on ``batch_size``. ``raw_scale`` undoes the global standardization.
    """
    cfg = model.cfg
    if raw_scale and standardizer is None:
        raise ConfigError("Raw-scale metrics need the dataset standardizer")
    windows = make_windows(view, cfg.lookback, cfg.horizon, window_stride)
    start = time.perf_counter()
    sums = _ErrorSums()
    for idx in _batches(len(windows), batch_size):
        x, y = windows.batch(idx)
        pred = model.forward(x, training=False).data
        if raw_scale:
            pred = standardizer.inverse(pred, channel_axis=1)
            y = standardizer.inverse(y, channel_axis=1)
        sums.add(pred, y)
    return MetricsReport(
        dataset=dataset,
        horizon=cfg.horizon,
        split=view.name,
        mse=sums.mse,
        mae=sums.mae,
        epoch=epoch,
        seconds=time.perf_counter() - start,
        fingerprint=fingerprint,
    )


def naive_baseline(
    view: SplitView,
    lookback: int,
    horizon: int,
    *,
    dataset: str = "",
    window_stride: int = 1,
) -> MetricsReport:
    """Predict y[d, t] = x[d, L−1] for every t."""
    windows = make_windows(view, lookback, horizon, window_stride)
    sums = _ErrorSums()
    for idx in _batches(len(windows), EVAL_BATCH_SIZE):
        x, y = windows.batch(idx)
        sums.add(np.repeat(x[:, :, -1:], horizon, axis=2), y)
    return MetricsReport(
        dataset=dataset, horizon=horizon, split=view.name, mse=sums.mse, mae=sums.mae
    )


# --- Training ---


def _frequency_corpus(windows: WindowSet) -> np.ndarray:
    count = len(windows)
    picks = np.linspace(0, count - 1, min(count, FREQ_INIT_MAX_WINDOWS)).round().astype(int)
    picks = np.unique(picks)
    return windows.inputs(picks)


def train(
    model: JTFTModel,
    splits: DatasetSplits,
    train_cfg: TrainConfig,
    *,
    dataset: str = "",
    fingerprint: str = "",
) -> TrainResult:
    """Mini-batch Adam on training windows with validation early stopping.

    ψ is initialized from training look-backs only. Every step clamps ψ after
    the update. The returned model holds the parameters of the best
    validation epoch.
    """
    cfg = model.cfg
    result = TrainResult(model=model)
    if train_cfg.epochs == 0:
        logger.info("epochs=0: returning the initial parameters")
        return result

    windows = make_windows(splits.train, cfg.lookback, cfg.horizon, train_cfg.window_stride)
    make_windows(splits.val, cfg.lookback, cfg.horizon)
    model.init_frequencies(_frequency_corpus(windows))

    shuffle_rng, dropout_rng = np.random.default_rng(train_cfg.seed).spawn(2)
    params = model.parameters()
    state = AdamState(lr=train_cfg.lr)
    best_state: dict[str, np.ndarray] | None = None
    stale = 0
    step = 0

    for epoch in range(1, train_cfg.epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(windows))
        batches = [order[idx] for idx in _batches(len(order), train_cfg.batch_size)]
        if train_cfg.max_batches_per_epoch is not None:
            batches = batches[: train_cfg.max_batches_per_epoch]

        total, seen = 0.0, 0
        for idx in batches:
            x, y = windows.batch(idx)
            with Tape() as tape:
                loss = mse_loss(model.forward(x, training=True, rng=dropout_rng), Tensor(y))
            value = float(loss)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"Training loss became non-finite at step {step} (epoch {epoch})",
                    f"learning rate {train_cfg.lr}",
                )
            zero_grad(params)
            backward(loss, tape)
            adam_step(params, state)
            model.constrain_frequencies()
            total += value * len(idx)
            seen += len(idx)
            step += 1

        report = evaluate(model, splits.val, dataset=dataset, epoch=epoch, fingerprint=fingerprint)
        report.train_loss = total / seen
        report.seconds = time.perf_counter() - start
        result.history.append(report)
        logger.info(
            "epoch %d: train %.6f val mse %.6f mae %.6f",
            epoch,
            report.train_loss,
            report.mse,
            report.mae,
        )

        if result.best_val_mse is None or report.mse < result.best_val_mse:
            result.best_val_mse = report.mse
            result.best_epoch = epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                logger.info(
                    "Early stopping after epoch %d (best epoch %d)", epoch, result.best_epoch
                )
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    return result
