"""Experiment files (TOML) with dotted command-line overrides."""

from __future__ import annotations

import logging
import os
import types
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from jtft import constants
from jtft.constants import DEFAULT_SEED
from jtft.core.errors import ConfigError
from jtft.core.trainer import TrainConfig
from jtft.data.dataset import SplitSpec
from jtft.models.config import ModelConfig

logger = logging.getLogger("jtft.config")

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class DatasetConfig:
    path: str | None = None
    split_ratios: tuple[float, ...] | None = None  # None: benchmark split for the dataset
    max_rows: int | None = None

    def __post_init__(self) -> None:
        if self.split_ratios is not None:
            SplitSpec(tuple(self.split_ratios))
        if self.max_rows is not None and self.max_rows < 1:
            raise ConfigError(f"dataset.max_rows must be >= 1, got {self.max_rows}")

    def split_for(self, name: str) -> SplitSpec:
        if self.split_ratios is None:
            return SplitSpec.for_dataset(name)
        return SplitSpec(tuple(self.split_ratios))


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = DEFAULT_SEED
    output_dir: str = "runs/jtft"

    def train_config(self) -> TrainConfig:
        """Training settings with the experiment seed applied."""
        return replace(self.train, seed=self.seed)


# Keys settable per section; channels come from the dataset, the seed is top-level.
SECTIONS: dict[str, tuple[type, set[str]]] = {
    "dataset": (DatasetConfig, {f.name for f in fields(DatasetConfig)}),
    "model": (ModelConfig, {f.name for f in fields(ModelConfig)} - {"channels"}),
    "train": (TrainConfig, TrainConfig.field_names() - {"seed"}),
}
TOP_LEVEL = {"seed": int, "output_dir": str}


def _is_union(hint) -> bool:
    return typing.get_origin(hint) in (typing.Union, types.UnionType)


def coerce(value, hint, key: str):
    """Convert a TOML value or a command-line string to the declared field type."""
    if _is_union(hint):
        options = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None or (isinstance(value, str) and value.lower() == "none"):
            return None
        return coerce(value, options[0], key)
    if typing.get_origin(hint) is tuple:
        item = typing.get_args(hint)[0]
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        if not isinstance(value, list | tuple):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return tuple(coerce(v, item, key) for v in value)
    if hint is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in _TRUE | _FALSE:
            return value.lower() in _TRUE
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    if hint is int:
        if isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        if isinstance(value, int):
            return value
        try:
            return int(str(value).strip())
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    if hint is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    raise ConfigError(f"{key}: unsupported setting type {hint}")


def parse_overrides(args: list[str]) -> dict[str, str]:
    """``["--model.d_m", "64", "--seed=7"]`` → ``{"model.d_m": "64", "seed": "7"}``."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(
                f"Unexpected argument {arg!r}; overrides look like --section.key value"
            )
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"Override --{key} has no value")
            value = args[i + 1]
            i += 2
        overrides[key] = value
    return overrides


def _set(raw: dict, key: str, value) -> None:
    if "." not in key:
        if key not in TOP_LEVEL:
            raise ConfigError(f"Unknown setting {key!r}")
        raw[key] = value
        return
    section, name = key.split(".", 1)
    if section not in SECTIONS:
        raise ConfigError(f"Unknown section {section!r} in {key!r}")
    if name not in SECTIONS[section][1]:
        raise ConfigError(f"Unknown setting {key!r}")
    raw.setdefault(section, {})[name] = value


def _read_file(path: Path) -> dict:
    if not path.is_file():
        raise ConfigError(f"Experiment file not found: {path}")
    try:
        with path.open("rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Experiment file {path.name} is not valid TOML", str(e)) from e


def build_experiment(raw: dict) -> ExperimentConfig:
    """Validate a nested settings dict and build the typed configuration."""
    for key in raw:
        if key not in SECTIONS and key not in TOP_LEVEL:
            raise ConfigError(f"Unknown setting {key!r}")

    built = {}
    for section, (cls, allowed) in SECTIONS.items():
        values = raw.get(section, {})
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"Unknown setting {section}.{unknown[0]}")
        hints = typing.get_type_hints(cls)
        kwargs = {k: coerce(v, hints[k], f"{section}.{k}") for k, v in values.items()}
        built[section] = cls(**kwargs)

    top = {k: coerce(raw[k], hint, k) for k, hint in TOP_LEVEL.items() if k in raw}
    return ExperimentConfig(**built, **top)


def load_experiment(
    path: str | Path | None = None, overrides: list[str] | None = None
) -> ExperimentConfig:
    """File settings, then dotted overrides, then the JTFT_SEED environment variable."""
    raw = _read_file(Path(path)) if path is not None else {}
    for key, value in parse_overrides(overrides or []).items():
        _set(raw, key, value)
    env_seed = os.environ.get(constants.SEED_ENV_VAR)
    if env_seed is not None:
        raw["seed"] = env_seed
        logger.info("Seed %s taken from %s", env_seed, constants.SEED_ENV_VAR)
    return build_experiment(raw)
