"""CSV ingestion, chronological splits, standardization and sliding windows."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from jtft.constants import DEFAULT_SPLIT, ETTM2_SPLIT, NORM_EPS
from jtft.core.errors import ConfigError, DataError

logger = logging.getLogger("jtft.data")

MAX_REPORTED_LINES = 10


@dataclass(frozen=True)
class Dataset:
    name: str
    values: np.ndarray  # rows×D, read-only
    channels: tuple[str, ...]
    timestamps: tuple[str, ...] = field(repr=False, default=())

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


def load_csv_dataset(
    path: str | Path, max_rows: int | None = None, name: str | None = None
) -> Dataset:
    """Read a header CSV whose first column is a timestamp and the rest numeric channels.

    Every cell is parsed strictly; blank rows and rows with a missing, non-numeric or
    non-finite value are rejected, reported by their 1-based file line (the header is
    line 1).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Dataset file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            nrows=max_rows,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise DataError(f"Dataset {path.name} is empty", str(e)) from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"Dataset {path.name} could not be parsed", str(e)) from e

    if frame.shape[1] < 2:
        raise DataError(f"Dataset {path.name} needs a timestamp column and at least one channel")
    if frame.empty:
        raise DataError(f"Dataset {path.name} has a header but no rows")

    numeric = frame.iloc[:, 1:].apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if bad.size:
        lines = [int(i) + 2 for i in bad[:MAX_REPORTED_LINES]]
        more = f" (and {bad.size - len(lines)} more)" if bad.size > len(lines) else ""
        raise DataError(
            f"Dataset {path.name} has blank, non-numeric or non-finite values on line(s) "
            f"{', '.join(map(str, lines))}{more}"
        )

    values.setflags(write=False)
    dataset = Dataset(
        name=name or path.stem,
        values=values,
        channels=tuple(str(c) for c in frame.columns[1:]),
        timestamps=tuple(frame.iloc[:, 0]),
    )
    logger.info("Loaded %s: %d rows, %d channels", dataset.name, dataset.rows, dataset.num_channels)
    return dataset


# --- Splits ---


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = DEFAULT_SPLIT

    def __post_init__(self) -> None:
        if len(self.ratios) != 3:
            raise ConfigError(f"Split needs three ratios (train, val, test), got {self.ratios}")
        if any(r < 0 for r in self.ratios):
            raise ConfigError(f"Split ratios must be non-negative, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"Split ratios must sum to 1, got {self.ratios}")

    @classmethod
    def for_dataset(cls, name: str) -> SplitSpec:
        """Benchmark split for a dataset: 6:2:2 for ETTm2, 7:1:2 otherwise."""
        return cls(ETTM2_SPLIT if name.lower() == "ettm2" else DEFAULT_SPLIT)

    def boundaries(self, rows: int) -> tuple[int, int]:
        """(train_end, val_end): train is [0, train_end), test is [val_end, rows)."""
        train_end = int(rows * self.ratios[0] + 1e-9)
        val_end = rows - int(rows * self.ratios[2] + 1e-9)
        return train_end, val_end


@dataclass(frozen=True)
class Standardizer:
    """Per-channel z-scoring fitted on the training rows.

    Backed by a fitted ``StandardScaler`` whose scale is floored at ``NORM_EPS``.
    """

    scaler: StandardScaler

    @classmethod
    def fit(cls, values: np.ndarray) -> Standardizer:
        scaler = StandardScaler().fit(values)
        scaler.scale_ = np.maximum(np.sqrt(scaler.var_), NORM_EPS)
        return cls(scaler)

    @classmethod
    def from_stats(cls, mean: np.ndarray, std: np.ndarray) -> Standardizer:
        mean = np.asarray(mean, dtype=np.float64)
        std = np.maximum(np.asarray(std, dtype=np.float64), NORM_EPS)
        scaler = StandardScaler()
        scaler.mean_, scaler.var_, scaler.scale_ = mean, std**2, std
        scaler.n_features_in_ = mean.shape[0]
        scaler.n_samples_seen_ = 0
        return cls(scaler)

    @property
    def mean(self) -> np.ndarray:
        return self.scaler.mean_

    @property
    def std(self) -> np.ndarray:
        return self.scaler.scale_

    def transform(self, values: np.ndarray) -> np.ndarray:
        return self.scaler.transform(values)

    def inverse(self, values: np.ndarray, channel_axis: int = -1) -> np.ndarray:
        moved = np.moveaxis(np.asarray(values, dtype=np.float64), channel_axis, -1)
        flat = self.scaler.inverse_transform(moved.reshape(-1, moved.shape[-1]))
        return np.moveaxis(flat.reshape(moved.shape), -1, channel_axis)


@dataclass(frozen=True)
class SplitView:
    """Contiguous standardized rows of one split.

    ``context`` leading rows belong to the previous split; they may feed
    look-backs but never targets.
    """

    name: str
    values: np.ndarray  # rows×D, standardized
    offset: int  # dataset row of values[0]
    context: int = 0

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DatasetSplits:
    train: SplitView
    val: SplitView
    test: SplitView
    standardizer: Standardizer
    boundaries: tuple[int, int]

    def view(self, name: str) -> SplitView:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ConfigError(f"Unknown split {name!r}") from None


def split_dataset(
    dataset: Dataset,
    spec: SplitSpec,
    lookback: int,
    horizon: int | None = None,
) -> DatasetSplits:
    """Chronological train/val/test views; val and test reach back ``lookback`` rows."""
    rows = dataset.rows
    train_end, val_end = spec.boundaries(rows)
    if train_end - lookback < 0:
        raise DataError(
            f"Dataset {dataset.name} is too short: {train_end} training rows "
            f"for a look-back of {lookback}"
        )
    standardizer = Standardizer.fit(dataset.values[:train_end])
    scaled = standardizer.transform(dataset.values)
    scaled.setflags(write=False)

    def _view(name: str, start: int, end: int, context: int) -> SplitView:
        return SplitView(name, scaled[start:end], start, context)

    splits = DatasetSplits(
        train=_view("train", 0, train_end, 0),
        val=_view("val", train_end - lookback, val_end, lookback),
        test=_view("test", val_end - lookback, rows, lookback),
        standardizer=standardizer,
        boundaries=(train_end, val_end),
    )
    if horizon is not None:
        for view in (splits.train, splits.val, splits.test):
            if len(view) < lookback + horizon:
                raise DataError(
                    f"Split {view.name} of {dataset.name} has {len(view)} rows; "
                    f"a window needs {lookback + horizon}"
                )
    logger.debug("Split %s at rows %d / %d of %d", dataset.name, train_end, val_end, rows)
    return splits


# --- Windows ---


@dataclass(frozen=True)
class WindowSample:
    x: np.ndarray  # D×L
    y: np.ndarray  # D×T
    origin: int  # dataset row of x[:, 0]


class WindowSet(Sequence):
    """Lazy sliding windows over a split view."""

    def __init__(self, view: SplitView, lookback: int, horizon: int, stride: int = 1) -> None:
        self.view = view
        self.lookback = lookback
        self.horizon = horizon
        self.stride = stride
        self._starts = np.arange(0, len(view) - lookback - horizon + 1, stride)

    def __len__(self) -> int:
        return len(self._starts)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        start = int(self._starts[index])
        x, y = self.batch([index])
        return WindowSample(x=x[0], y=y[0], origin=self.view.offset + start)

    def _gather(self, starts: np.ndarray, length: int) -> np.ndarray:
        rows = starts[:, None] + np.arange(length)[None, :]
        return np.swapaxes(self.view.values[rows], 1, 2)  # B×D×length

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """(B×D×L look-backs, B×D×T targets) for window indices."""
        starts = self._starts[np.asarray(indices, dtype=np.intp)]
        targets = self._gather(starts + self.lookback, self.horizon)
        return self._gather(starts, self.lookback), targets

    def inputs(self, indices=None) -> np.ndarray:
        if indices is None:
            return self._gather(self._starts, self.lookback)
        starts = self._starts[np.asarray(indices, dtype=np.intp)]
        return self._gather(starts, self.lookback)


def make_windows(view: SplitView, lookback: int, horizon: int, stride: int = 1) -> WindowSet:
    """Windows at every valid origin; count = ⌊(len − L − T)/stride⌋ + 1."""
    if stride < 1:
        raise ConfigError(f"Window stride must be >= 1, got {stride}")
    if len(view) < lookback + horizon:
        raise DataError(
            f"Split {view.name} has {len(view)} rows; a window needs {lookback + horizon}"
        )
    return WindowSet(view, lookback, horizon, stride)
