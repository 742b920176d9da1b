"""Flat checkpoint archive: metadata record plus named little-endian float64 arrays."""

from __future__ import annotations

import hashlib
import json
import logging
import zipfile
from pathlib import Path

import numpy as np

from jtft.constants import CHECKPOINT_FORMAT_VERSION
from jtft.core.errors import CheckpointError, DimensionError, UsageError
from jtft.models.config import ModelConfig
from jtft.models.jtft import JTFTModel

logger = logging.getLogger("jtft.checkpoint")

META_KEY = "__meta__"


def payload_digest(state: dict[str, np.ndarray]) -> str:
    """SHA-256 over parameter names, shapes and raw bytes, in name order."""
    h = hashlib.sha256()
    for name in sorted(state):
        array = np.ascontiguousarray(state[name], dtype="<f8")
        h.update(name.encode())
        h.update(repr(array.shape).encode())
        h.update(array.tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, model: JTFTModel, extras: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {name: np.asarray(value, dtype="<f8") for name, value in model.state_dict().items()}
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model": model.cfg.to_dict(),
        "digest": payload_digest(state),
        "extras": extras or {},
    }
    encoded = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with path.open("wb") as f:
        np.savez(f, **{META_KEY: encoded}, **state)
    logger.info("Saved checkpoint %s (%d arrays)", path, len(state))
    return path


def load_checkpoint(path: str | Path) -> tuple[JTFTModel, dict]:
    """Rebuild the model from an archive; returns (model, extras)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            if META_KEY not in archive.files:
                raise CheckpointError(f"Checkpoint {path.name} has no metadata record")
            meta = json.loads(archive[META_KEY].tobytes().decode())
            state = {name: archive[name] for name in archive.files if name != META_KEY}
    except CheckpointError:
        raise
    except (OSError, ValueError, zipfile.BadZipFile, EOFError, KeyError) as e:
        raise CheckpointError(f"Checkpoint {path.name} is unreadable (integrity)", str(e)) from e

    version = meta.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint format version {version} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    if payload_digest(state) != meta.get("digest"):
        raise CheckpointError(f"Checkpoint {path.name} failed the integrity check")

    model_cfg = dict(meta["model"])
    model = JTFTModel(ModelConfig.from_dict(model_cfg))
    try:
        model.load_state_dict(state)
    except (UsageError, DimensionError) as e:
        raise CheckpointError(
            f"Checkpoint {path.name} does not match its configuration", e.detail or str(e)
        ) from e
    logger.info("Loaded checkpoint %s", path)
    return model, meta.get("extras", {})
