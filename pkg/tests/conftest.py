from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

ETT_COLUMNS = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]


def seasonal_series(rows: int, channels: int, seed: int = 0) -> np.ndarray:
    """Daily/weekly-periodic channels with noise, on a 15-minute grid."""
    rng = np.random.default_rng(seed)
    t = np.arange(rows)[:, None]
    phase = rng.uniform(0, 2 * np.pi, channels)
    daily = np.sin(2 * np.pi * t / 96 + phase)
    weekly = 0.5 * np.cos(2 * np.pi * t / 672 + phase)
    return 10.0 + 3.0 * daily + weekly + 0.1 * rng.normal(size=(rows, channels))


def write_csv(path: Path, values: np.ndarray, columns: list[str] | None = None) -> Path:
    columns = columns or [f"c{i}" for i in range(values.shape[1])]
    lines = ["date," + ",".join(columns)]
    for i, row in enumerate(values):
        stamp = f"2016-07-01 {i // 4 % 24:02d}:{i % 4 * 15:02d}:00"
        lines.append(stamp + "," + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def csv_factory(tmp_path: Path) -> Callable[..., Path]:
    """Write a synthetic dataset CSV: csv_factory(rows, channels, name=..., seed=...)."""

    def _make(rows: int, channels: int, name: str = "data.csv", seed: int = 0) -> Path:
        return write_csv(tmp_path / name, seasonal_series(rows, channels, seed))

    return _make


@pytest.fixture
def ett_csv(tmp_path: Path) -> Path:
    """ETTm2-shaped file: date plus seven load/temperature channels."""
    return write_csv(tmp_path / "ETTm2.csv", seasonal_series(1200, 7, seed=3), ETT_COLUMNS)


@pytest.fixture(autouse=True)
def _no_real_home(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Prevent tests from writing to the real ~/.jtft directory."""
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.delenv("JTFT_SEED", raising=False)
    monkeypatch.setattr("jtft.constants.APP_DIR", tmp_path / ".jtft")
    monkeypatch.setattr("jtft.constants.LOG_DIR", tmp_path / ".jtft" / "logs")
    monkeypatch.setattr("jtft.constants.LOG_FILE", tmp_path / ".jtft" / "logs" / "jtft.log")
