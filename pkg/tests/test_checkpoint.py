"""Tests for checkpoint save/load and integrity checks."""

import json

import numpy as np
import pytest

from jtft.core.errors import CheckpointError
from jtft.models.checkpoint import META_KEY, load_checkpoint, payload_digest, save_checkpoint
from jtft.models.config import ModelConfig
from jtft.models.jtft import JTFTModel


def _model(seed: int = 3) -> JTFTModel:
    cfg = ModelConfig(lookback=32, horizon=4, channels=2, patch_len=4, stride=2, n_t=4, n_f=3,
                      d_m=8, heads=2, encoder_layers=1, d_r=2)
    return JTFTModel(cfg, seed=seed)


def _rewrite(path, mutate):
    with np.load(path) as archive:
        arrays = {name: archive[name] for name in archive.files}
    meta = json.loads(arrays.pop(META_KEY).tobytes().decode())
    mutate(meta, arrays)
    encoded = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **{META_KEY: encoded}, **arrays)


class TestRoundTrip:
    def test_predictions_and_extras_survive(self, tmp_path):
        model = _model()
        path = save_checkpoint(tmp_path / "run" / "checkpoint.npz", model, {"dataset": "ETTh1"})
        loaded, extras = load_checkpoint(path)
        assert loaded.cfg == model.cfg
        assert extras == {"dataset": "ETTh1"}
        x = np.random.default_rng(0).normal(size=(2, 32))
        np.testing.assert_array_equal(loaded(x).data, model(x).data)

    def test_digest_depends_on_values(self):
        state = _model().state_dict()
        digest = payload_digest(state)
        state["head.proj.bias"][0] += 1e-12
        assert payload_digest(state) != digest


class TestIntegrity:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.npz")

    def test_corrupted_bytes(self, tmp_path):
        path = save_checkpoint(tmp_path / "checkpoint.npz", _model())
        path.write_bytes(path.read_bytes()[:200])
        with pytest.raises(CheckpointError, match="integrity"):
            load_checkpoint(path)

    def test_tampered_parameter(self, tmp_path):
        path = save_checkpoint(tmp_path / "checkpoint.npz", _model())

        def mutate(meta, arrays):
            arrays["head.proj.bias"] = arrays["head.proj.bias"] + 1.0

        _rewrite(path, mutate)
        with pytest.raises(CheckpointError, match="integrity"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = save_checkpoint(tmp_path / "checkpoint.npz", _model())

        def mutate(meta, arrays):
            meta["format_version"] = 99

        _rewrite(path, mutate)
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(path)

    def test_missing_metadata(self, tmp_path):
        path = tmp_path / "checkpoint.npz"
        with open(path, "wb") as f:
            np.savez(f, weights=np.ones(3))
        with pytest.raises(CheckpointError, match="metadata"):
            load_checkpoint(path)

    def test_config_mismatch(self, tmp_path):
        path = save_checkpoint(tmp_path / "checkpoint.npz", _model())

        def mutate(meta, arrays):
            del arrays["head.proj.bias"]
            meta["digest"] = payload_digest(arrays)

        _rewrite(path, mutate)
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path)
