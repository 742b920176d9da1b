"""Tests for the JTFT network stages."""

import math

import numpy as np
import pytest

from jtft.cli.commands import GRADCHECK_PRESETS, run_model_gradcheck
from jtft.core.errors import ConfigError, DataError, DimensionError
from jtft.core.gradcheck import finite_diff_gradcheck
from jtft.core.spectral import FrequencySet, build_cdct_matrix
from jtft.core.tensor import Tensor
from jtft.models.config import ModelConfig, patch_count, patch_preset
from jtft.models.jtft import (
    Encoder,
    JTFTModel,
    LowRankAttention,
    NormStats,
    PredictionHead,
    build_jtfr,
    denormalize,
    encoder_forward,
    instance_normalize,
    model_forward,
    patchify,
)
from jtft.models.layers import attention, lmsa


def _small_cfg(**kw) -> ModelConfig:
    base = dict(
        lookback=48,
        horizon=6,
        channels=4,
        patch_len=8,
        stride=4,
        n_t=5,
        n_f=3,
        d_m=8,
        heads=2,
        encoder_layers=1,
        lra_layers=1,
        d_r=2,
        dropout=0.1,
    )
    base.update(kw)
    return ModelConfig(**base)


def _rng(seed=0):
    return np.random.default_rng(seed)


class TestInstanceNorm:
    def test_population_std(self):
        normed, stats = instance_normalize(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(normed.data, [[-1.2247448714, 0.0, 1.2247448714]], atol=1e-9)
        assert stats.mean[0] == pytest.approx(2.0)
        assert stats.std[0] == pytest.approx(math.sqrt(2 / 3))

    def test_constant_channel_is_floored(self):
        normed, stats = instance_normalize(np.array([[5.0, 5.0, 5.0]]))
        np.testing.assert_array_equal(normed.data, [[0.0, 0.0, 0.0]])
        assert stats.std[0] == 1e-5

    def test_round_trip(self):
        x = _rng().normal(3.0, 7.0, size=(2, 5, 40))
        normed, stats = instance_normalize(x)
        assert np.abs(denormalize(normed, stats).data - x).max() < 1e-9

    def test_denormalize_zeros_and_identity(self):
        stats = NormStats(mean=np.array([1.0, -2.0]), std=np.array([3.0, 4.0]))
        out = denormalize(Tensor(np.zeros((2, 3))), stats).data
        np.testing.assert_allclose(out[:, 0], [1.0, -2.0])
        y = _rng().normal(size=(2, 3))
        identity = NormStats(mean=np.zeros(2), std=np.ones(2))
        np.testing.assert_array_equal(denormalize(Tensor(y), identity).data, y)

    def test_needs_two_steps(self):
        with pytest.raises(DataError):
            instance_normalize(np.ones((2, 1)))


class TestPatchify:
    @pytest.mark.parametrize(
        ("length", "patch_len", "stride", "expected"),
        [(336, 16, 8, 42), (512, 16, 8, 64), (84, 4, 2, 42), (128, 4, 2, 64)],
    )
    def test_patch_counts(self, length, patch_len, stride, expected):
        patches = patchify(np.zeros((1, length)), patch_len, stride)
        assert patches.count == expected == patch_count(length, patch_len, stride)

    def test_patch_equal_to_length(self):
        x = np.arange(6.0)[None, :]
        patches = patchify(x, 6, 3).patches.data[0]
        assert patches.shape == (2, 6)
        np.testing.assert_array_equal(patches[0], np.arange(6.0))
        np.testing.assert_array_equal(patches[1], [3, 4, 5, 5, 5, 5])

    def test_contiguous_windows_and_replicated_end(self):
        x = np.arange(20.0)[None, :]
        patches = patchify(x, 4, 2).patches.data[0]
        np.testing.assert_array_equal(patches[3], [6, 7, 8, 9])
        np.testing.assert_array_equal(patches[-1], [18, 19, 19, 19])

    def test_without_padding(self):
        assert patchify(np.zeros((1, 20)), 4, 2, padding=False).count == 9

    def test_too_short(self):
        with pytest.raises(DataError):
            patchify(np.zeros((1, 3)), 4, 2)

    def test_presets(self):
        assert patch_preset(84) == (4, 2)
        assert patch_preset(336) == (16, 8)


class TestJtfr:
    def test_default_shape(self):
        patches = patchify(_rng().normal(size=(7, 336)), 16, 8)
        cdct = build_cdct_matrix(FrequencySet.grid(16, 42), 42)
        jtfr = build_jtfr(patches, cdct, 32)
        assert jtfr.sequence.shape == (7, 48, 16)
        np.testing.assert_array_equal(jtfr.td_part.data, patches.patches.data[:, -32:, :])

    def test_time_domain_only(self):
        patches = patchify(_rng().normal(size=(2, 40)), 8, 4)
        jtfr = build_jtfr(patches, None, 4)
        assert jtfr.fd_part is None
        np.testing.assert_array_equal(jtfr.sequence.data, patches.patches.data[:, -4:, :])

    def test_constant_series_has_no_frequency_content(self):
        normed, _ = instance_normalize(np.full((3, 64), 4.2))
        patches = patchify(normed, 8, 4)
        cdct = build_cdct_matrix(FrequencySet.grid(4, patches.count), patches.count)
        jtfr = build_jtfr(patches, cdct, 2)
        np.testing.assert_allclose(jtfr.fd_part.data, 0.0, atol=1e-12)

    def test_too_many_time_patches(self):
        patches = patchify(np.zeros((1, 16)), 8, 4)
        with pytest.raises(ConfigError):
            build_jtfr(patches, None, patches.count + 1)

    def test_sequence_length_independent_of_lookback(self):
        lengths = set()
        for lookback in (128, 1024):
            cfg = ModelConfig(lookback=lookback, channels=2, n_t=8, n_f=4, d_m=16, heads=2)
            jtfr, _ = JTFTModel(cfg).preprocess(Tensor(_rng().normal(size=(2, lookback))))
            lengths.add(jtfr.seq_len)
        assert lengths == {12}


class TestAttention:
    def test_single_key(self):
        q, k = _rng(1).normal(size=(4, 3)), _rng(2).normal(size=(1, 3))
        v = np.array([[1.0, 2.0, 3.0]])
        out = attention(Tensor(q), Tensor(k), Tensor(v)).data
        np.testing.assert_allclose(out, np.repeat(v, 4, 0))

    def test_identical_keys_average_values(self):
        k = np.ones((5, 3))
        v = _rng(3).normal(size=(5, 3))
        out = attention(Tensor(_rng(4).normal(size=(2, 3))), Tensor(k), Tensor(v)).data
        np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (2, 1)), atol=1e-12)

    def test_matches_loop_oracle(self):
        q = _rng(5).normal(size=(4, 8))
        k, v = _rng(6).normal(size=(6, 8)), _rng(7).normal(size=(6, 8))
        expected = np.zeros((4, 8))
        for i in range(4):
            logits = np.array([q[i] @ k[j] / math.sqrt(8) for j in range(6)])
            weights = np.exp(logits - logits.max())
            weights /= weights.sum()
            expected[i] = sum(weights[j] * v[j] for j in range(6))
        out = attention(Tensor(q), Tensor(k), Tensor(v)).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), Tensor(np.ones((2, 4))))


class TestLmsa:
    def test_single_head_is_plain_attention(self):
        q, z = _rng(1).normal(size=(3, 4)), _rng(2).normal(size=(5, 6))
        w_kv, w_o = _rng(3).normal(size=(6, 4)), _rng(4).normal(size=(4, 4))
        projected = Tensor(z @ w_kv)
        expected = attention(Tensor(q), projected, projected).data @ w_o
        out = lmsa(Tensor(q), Tensor(z), Tensor(z), Tensor(w_kv), Tensor(w_o), 1).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_single_key_value(self):
        q, z = _rng(1).normal(size=(3, 4)), _rng(2).normal(size=(1, 6))
        w_kv, w_o = _rng(3).normal(size=(6, 4)), _rng(4).normal(size=(4, 5))
        zt = Tensor(z)
        out = lmsa(Tensor(q), zt, zt, Tensor(w_kv), Tensor(w_o), 2).data
        np.testing.assert_allclose(out, np.repeat(z @ w_kv, 3, 0) @ w_o, atol=1e-12)

    def test_head_split_must_be_exact(self):
        with pytest.raises(ConfigError):
            lmsa(Tensor(np.ones((2, 5))), Tensor(np.ones((3, 4))), Tensor(np.ones((3, 4))),
                 Tensor(np.ones((4, 5))), Tensor(np.ones((5, 5))), 2)

    def test_gradients(self):
        q = Tensor(_rng(1).normal(size=(2, 6)), requires_grad=True)
        z = Tensor(_rng(2).normal(size=(4, 10)), requires_grad=True)
        w_kv = Tensor(_rng(3).normal(size=(10, 6)) * 0.3, requires_grad=True)
        w_o = Tensor(_rng(4).normal(size=(6, 6)) * 0.3, requires_grad=True)
        w = Tensor(_rng(5).normal(size=(2, 6)))
        report = finite_diff_gradcheck(
            lambda: (lmsa(q, z, z, w_kv, w_o, 3) * w).sum(), [q, z, w_kv, w_o]
        )
        assert report.passed


class TestEncoder:
    def test_channel_equivariance(self):
        cfg = _small_cfg()
        model = JTFTModel(cfg, seed=1)
        x = _rng(2).normal(size=(4, 48))
        perm = np.array([2, 0, 3, 1])
        out = encoder_forward(model.preprocess(Tensor(x))[0], model.encoder).data
        out_perm = encoder_forward(model.preprocess(Tensor(x[perm]))[0], model.encoder).data
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)

    def test_no_layers_is_embedding(self):
        cfg = _small_cfg(encoder_layers=0)
        model = JTFTModel(cfg, seed=1)
        jtfr, _ = model.preprocess(Tensor(_rng(3).normal(size=(4, 48))))
        enc = model.encoder
        embedded = jtfr.sequence.data @ enc.embedding.weight.data + enc.embedding.bias.data
        expected = embedded + enc.position.data
        np.testing.assert_allclose(encoder_forward(jtfr, enc).data, expected, atol=1e-12)

    def test_output_shape(self):
        cfg = _small_cfg()
        jtfr, _ = JTFTModel(cfg).preprocess(Tensor(_rng().normal(size=(4, 48))))
        assert Encoder(cfg, _rng())(jtfr).shape == (4, cfg.seq_len, cfg.d_m)


class TestLowRankAttention:
    def _layer(self, channels=4):
        return LowRankAttention(_small_cfg(channels=channels), _rng(7))

    def test_shape_preserved(self):
        z = Tensor(_rng().normal(size=(4, 8, 8)))
        assert self._layer()(z).shape == (4, 8, 8)

    def test_zero_distribution_silences_cross_channel_path(self):
        layer = self._layer()
        layer.distribute.data[:] = 0.0
        z = Tensor(_rng(1).normal(size=(4, 8, 8)))
        routed = layer.norm_route(z)
        expected = layer.norm_mlp(routed + layer.mlp(routed)).data
        np.testing.assert_allclose(layer(z).data, expected, atol=1e-12)

    def test_residual_identity(self):
        layer = self._layer()
        layer.distribute.data[:] = 0.0
        for p in layer.mlp.parameters():
            p.data[:] = 0.0
        z = Tensor(_rng(2).normal(size=(4, 8, 8)))
        np.testing.assert_allclose(layer(z).data, layer.norm_route(z).data, atol=1e-4)

    def test_single_channel(self):
        layer = self._layer(channels=1)
        out = layer(Tensor(_rng(3).normal(size=(1, 8, 8))))
        assert out.shape == (1, 8, 8) and out.is_finite()

    def test_breaks_channel_equivariance(self):
        layer = self._layer()
        z = _rng(4).normal(size=(4, 8, 8))
        perm = np.array([1, 0, 3, 2])
        assert not np.allclose(layer(Tensor(z[perm])).data, layer(Tensor(z)).data[perm])


class TestPredictionHead:
    def test_zero_latent_returns_means(self):
        cfg = _small_cfg()
        head = PredictionHead(cfg, _rng())
        head.proj.bias.data[:] = 0.0
        stats = NormStats(mean=np.array([1.0, 2.0, 3.0, 4.0]), std=np.full(4, 2.0))
        out = head(Tensor(np.zeros((4, cfg.seq_len, cfg.d_m))), stats).data
        assert out.shape == (4, cfg.horizon)
        np.testing.assert_allclose(out, np.repeat(stats.mean[:, None], cfg.horizon, 1))


class TestModel:
    def test_default_shape(self):
        model = JTFTModel(ModelConfig(channels=7))
        assert model_forward(model, _rng().normal(size=(7, 336))).shape == (7, 96)

    def test_patchs_path(self):
        cfg = _small_cfg(n_f=0, lra_layers=0)
        model = JTFTModel(cfg)
        assert model.frequencies is None
        assert model(_rng().normal(size=(4, 48))).shape == (4, 6)
        names = [name for name, _ in model.named_parameters()]
        assert not any(name.startswith(("lra", "frequencies")) for name in names)

    def test_batched_matches_single(self):
        model = JTFTModel(_small_cfg(), seed=3)
        x = _rng(1).normal(size=(3, 4, 48))
        batched = model(x).data
        for i in range(3):
            np.testing.assert_allclose(batched[i], model(x[i]).data, atol=1e-10)

    def test_dropout_is_seeded(self):
        model = JTFTModel(_small_cfg(dropout=0.3), seed=3)
        x = _rng(1).normal(size=(4, 48))
        first = model(x, training=True, rng=_rng(9)).data
        second = model(x, training=True, rng=_rng(9)).data
        np.testing.assert_array_equal(first, second)
        assert not np.allclose(first, model(x).data)

    def test_same_seed_same_parameters(self):
        a, b = JTFTModel(_small_cfg(), seed=4), JTFTModel(_small_cfg(), seed=4)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters(), strict=True):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_wrong_input_shape(self):
        with pytest.raises(DimensionError):
            JTFTModel(_small_cfg())(np.zeros((3, 48)))

    def test_parameter_names(self):
        names = [name for name, _ in JTFTModel(_small_cfg()).named_parameters()]
        assert names[0] == "frequencies.psi"
        assert "encoder.embedding.weight" in names
        assert "encoder.layers.0.attn.query.weight" in names
        assert "lra.0.lmsa.w_kv" in names
        assert names[-1] == "head.proj.bias"

    def test_state_dict_round_trip(self):
        source, target = JTFTModel(_small_cfg(), seed=1), JTFTModel(_small_cfg(), seed=2)
        target.load_state_dict(source.state_dict())
        x = _rng().normal(size=(4, 48))
        np.testing.assert_array_equal(source(x).data, target(x).data)

    def test_init_frequencies_from_windows(self):
        cfg = _small_cfg()
        model = JTFTModel(cfg)
        psi = model.frequencies.psi
        t = np.arange(48)
        windows = np.stack([np.tile(np.sin(2 * np.pi * (t + s) / 24), (4, 1)) for s in range(10)])
        model.init_frequencies(windows)
        assert model.frequencies.psi is psi
        assert psi.data[0] == 0.0
        assert np.all((psi.data[1:] > 0) & (psi.data[1:] < 1))
        assert np.all(np.diff(psi.data) > 0)

    def test_end_to_end_gradients(self):
        report, groups = run_model_gradcheck(GRADCHECK_PRESETS["tiny"])
        assert set(groups) == {"psi", "embedding", "encoder", "lra", "head"}
        assert report.max_rel_error < 1e-4


class TestModelConfig:
    def test_derived_sizes(self):
        cfg = ModelConfig(channels=7)
        assert (cfg.head_dim, cfg.ffn_dim, cfg.patch_count, cfg.seq_len) == (16, 256, 42, 48)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"d_m": 10, "heads": 3},
            {"lookback": 8, "patch_len": 16},
            {"n_t": 50},
            {"n_t": 0, "n_f": 0},
            {"dropout": 1.0},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            ModelConfig(**overrides)
