"""Tests for the causal transformer model and its checkpoints."""

import math

import numpy as np
import pytest

from conftest import flat_model_loss, spread_coords
from pvforecast import autodiff as ad
from pvforecast import model as M
from pvforecast.autodiff import Tensor, grad_check
from pvforecast.container import read_container, write_container
from pvforecast.data import DataError


def small_config(**overrides):
    base = dict(
        seq_len=8,
        model_dim=8,
        heads=2,
        head_dim=4,
        blocks=2,
        ffn_hidden=16,
        d_weather=3,
        d_metadata=2,
    )
    base.update(overrides)
    return M.ModelConfig(**base)


def small_inputs(config, batch=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, config.seq_len, config.d_weather))
    m = rng.normal(size=(batch, config.d_metadata))
    return X, m


class TestConfig:
    def test_head_split_must_cover_model_dim(self):
        with pytest.raises(DataError, match="heads"):
            M.ModelConfig(model_dim=64, heads=4, head_dim=8)

    def test_readout_mode_validated(self):
        with pytest.raises(DataError, match="readout_mode"):
            M.ModelConfig(readout_mode="both")

    def test_positive_sizes_required(self):
        with pytest.raises(DataError):
            small_config(blocks=0)

    def test_ablation_accepts_dict(self):
        config = M.ModelConfig(ablation={"disable_norm": True})
        assert config.ablation.disable_norm
        assert not config.ablation.disable_attention


class TestMask:
    def test_worked_example(self):
        s = ad.MASK_SENTINEL
        expected = np.array([[0.0, s, s], [0.0, 0.0, s], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(M.build_causal_mask(3), expected)

    def test_length_one(self):
        np.testing.assert_array_equal(M.build_causal_mask(1), np.zeros((1, 1)))

    def test_invalid_length(self):
        with pytest.raises(DataError):
            M.build_causal_mask(0)


class TestParameterCount:
    def test_default_configuration_total(self):
        # hand count for d=64, ffn=256, D_w=8, D_m=7, two blocks
        assert M.parameter_count(M.ModelConfig()) == 109441

    @pytest.mark.parametrize("blocks", [1, 2, 4, 6])
    def test_formula_matches_live_parameters(self, blocks):
        config = small_config(blocks=blocks)
        params = M.init_params(config, seed=0)
        live = sum(t.data.size for _, t in params.named_tensors())
        assert M.parameter_count(config) == live

    def test_block_count_scales_linearly(self):
        base = M.parameter_count(small_config(blocks=1))
        plus = M.parameter_count(small_config(blocks=2))
        per_block = plus - base
        assert M.parameter_count(small_config(blocks=6)) == base + 5 * per_block


class TestInit:
    def test_deterministic_per_seed(self):
        p1 = M.init_params(small_config(), seed=5)
        p2 = M.init_params(small_config(), seed=5)
        for (n1, t1), (n2, t2) in zip(p1.named_tensors(), p2.named_tensors()):
            assert n1 == n2
            np.testing.assert_array_equal(t1.data, t2.data)

    def test_seed_changes_weights(self):
        p1 = M.init_params(small_config(), seed=5)
        p2 = M.init_params(small_config(), seed=6)
        assert not np.array_equal(p1.weather_w.data, p2.weather_w.data)

    def test_bias_and_norm_initialization(self):
        params = M.init_params(small_config(), seed=0)
        for name, tensor in params.named_tensors():
            if name.endswith(".bias"):
                np.testing.assert_array_equal(tensor.data, np.zeros_like(tensor.data))
            if name.endswith(".gain"):
                np.testing.assert_array_equal(tensor.data, np.ones_like(tensor.data))
            assert tensor.requires_grad

    def test_matrices_within_uniform_bounds(self):
        params = M.init_params(small_config(), seed=1)
        for name, tensor in params.named_tensors():
            if tensor.data.ndim == 2:
                fan_in, fan_out = tensor.data.shape
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                assert np.all(np.abs(tensor.data) <= limit), name
                assert tensor.data.std() > 0.1 * limit, name

    def test_start_token_scale(self):
        config = M.ModelConfig()
        params = M.init_params(config, seed=2)
        scale = np.abs(params.start_token.data).max()
        assert 0.0 < scale < 6.0 * M.START_TOKEN_STD


class TestForward:
    def test_output_shapes(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config, batch=3)
        out = M.forward_batch(params, Tensor(X), Tensor(m))
        assert out.shape == (3, config.seq_len)
        single = M.forward(params, X[0], m[0])
        assert single.shape == (config.seq_len,)

    def test_single_equals_batch_row(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config, batch=4)
        out = M.forward_batch(params, Tensor(X), Tensor(m))
        for i in range(4):
            row = M.forward(params, X[i], m[i])
            np.testing.assert_allclose(row.data, out.data[i], rtol=1e-10, atol=1e-12)

    def test_shape_validation(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config)
        with pytest.raises(ad.ShapeError):
            M.forward_batch(params, Tensor(X[:, :4, :]), Tensor(m))
        with pytest.raises(ad.ShapeError):
            M.forward_batch(params, Tensor(X[..., :2]), Tensor(m))
        with pytest.raises(ad.ShapeError):
            M.forward_batch(params, Tensor(X), Tensor(m[:1]))
        with pytest.raises(ad.ShapeError):
            M.forward(params, X[0, :, 0], m[0])

    def test_deterministic(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config)
        a = M.forward_batch(params, Tensor(X), Tensor(m))
        b = M.forward_batch(params, Tensor(X), Tensor(m))
        np.testing.assert_array_equal(a.data, b.data)


class TestCausality:
    def test_prefix_bitwise_invariant_under_future_perturbation(self):
        # with the shifted readout, prediction t may use weather rows
        # strictly before t, so rows 0..j must survive a hit on row j
        config = small_config()
        params = M.init_params(config, seed=3)
        rng = np.random.default_rng(7)
        X, m = small_inputs(config, batch=1, seed=7)
        base = M.forward(params, X[0], m[0]).data
        for j in range(config.seq_len):
            bumped = X[0].copy()
            bumped[j] += rng.normal(scale=3.0, size=config.d_weather)
            pert = M.forward(params, bumped, m[0]).data
            np.testing.assert_array_equal(base[: j + 1], pert[: j + 1])

    def test_perturbation_reaches_later_steps(self):
        # the suffix must actually move, otherwise the invariance above
        # would hold for a constant function too
        config = small_config()
        params = M.init_params(config, seed=3)
        X, m = small_inputs(config, batch=1, seed=7)
        base = M.forward(params, X[0], m[0]).data
        bumped = X[0].copy()
        bumped[2] += 3.0
        pert = M.forward(params, bumped, m[0]).data
        assert not np.array_equal(base[3:], pert[3:])

    def test_algorithmic_readout_sees_current_row(self):
        config = small_config(readout_mode="algorithmic")
        params = M.init_params(config, seed=3)
        X, m = small_inputs(config, batch=1, seed=7)
        base = M.forward(params, X[0], m[0]).data
        bumped = X[0].copy()
        bumped[0] += 1.0
        pert = M.forward(params, bumped, m[0]).data
        assert base[0] != pert[0]  # slot 0 uses its own weather row
        config_s = small_config()
        params_s = M.init_params(config_s, seed=3)
        base_s = M.forward(params_s, X[0], m[0]).data
        pert_s = M.forward(params_s, bumped, m[0]).data
        assert base_s[0] == pert_s[0]  # shifted slot 0 sees only the start token


class TestAblations:
    def test_disable_metadata_ignores_station_vector(self):
        config = small_config(ablation={"disable_metadata": True})
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config, batch=2)
        out1 = M.forward_batch(params, Tensor(X), Tensor(m))
        out2 = M.forward_batch(params, Tensor(X), Tensor(m + 10.0))
        np.testing.assert_array_equal(out1.data, out2.data)

    def test_metadata_matters_by_default(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config, batch=2)
        out1 = M.forward_batch(params, Tensor(X), Tensor(m))
        out2 = M.forward_batch(params, Tensor(X), Tensor(m + 10.0))
        assert not np.array_equal(out1.data, out2.data)

    def test_disable_attention_localizes_computation(self):
        # without attention each position is a feed-forward tower, so a
        # hit on row j can only move the one prediction that reads it
        config = small_config(ablation={"disable_attention": True})
        params = M.init_params(config, seed=1)
        X, m = small_inputs(config, batch=1)
        base = M.forward(params, X[0], m[0]).data
        j = 3
        bumped = X[0].copy()
        bumped[j] += 2.0
        pert = M.forward(params, bumped, m[0]).data
        changed = np.flatnonzero(base != pert)
        np.testing.assert_array_equal(changed, [j + 1])

    def test_structure_flags_change_outputs(self):
        X, m = small_inputs(small_config(), batch=2)
        reference = M.forward_batch(
            M.init_params(small_config(), seed=0), Tensor(X), Tensor(m)
        ).data
        for flag in ("disable_norm", "disable_skip", "disable_attention"):
            config = small_config(ablation={flag: True})
            out = M.forward_batch(M.init_params(config, seed=0), Tensor(X), Tensor(m)).data
            assert not np.array_equal(out, reference), flag


class TestGradients:
    def test_backward_populates_every_parameter(self):
        config = small_config()
        params = M.init_params(config, seed=0)
        X, m = small_inputs(config, batch=2)
        target = np.random.default_rng(1).normal(size=(2, config.seq_len))
        loss = ad.mse(M.forward_batch(params, Tensor(X), Tensor(m)), Tensor(target))
        loss.backward()
        for name, tensor in params.named_tensors():
            assert tensor.grad is not None, name
            assert tensor.grad.shape == tensor.data.shape, name
            assert np.all(np.isfinite(tensor.grad)), name

    def test_full_model_matches_finite_differences(self):
        config = M.ModelConfig(
            seq_len=4,
            model_dim=8,
            heads=2,
            head_dim=4,
            blocks=1,
            ffn_hidden=16,
            d_weather=3,
            d_metadata=2,
        )
        rng = np.random.default_rng(5)
        X = rng.normal(size=(2, 4, 3))
        m = rng.normal(size=(2, 2))
        target = rng.normal(size=(2, 4))
        flat = flatten(config, seed=4)
        loss = flat_model_loss(config, X, m, target)
        coords = spread_coords(flat.size, 48)
        report = grad_check(loss, Tensor(flat), tol=1e-4, coords=coords)
        assert report.passed, f"max rel err {report.max_rel_error} at {report.worst_index}"


def flatten(config, seed):
    params = M.init_params(config, seed=seed)
    return np.concatenate([t.data.ravel() for _, t in params.named_tensors()])


class TestCheckpoint:
    def roundtrip(self, tmp_path, config=None, scaler=None):
        config = config or small_config()
        params = M.init_params(config, seed=9)
        path = str(tmp_path / "model.pvz")
        M.save_checkpoint(path, params, scaler)
        return params, M.load_checkpoint(path), path

    def test_bitwise_roundtrip(self, tmp_path):
        params, loaded, _ = self.roundtrip(tmp_path)
        assert loaded.kind == "transformer"
        for (n1, t1), (n2, t2) in zip(params.named_tensors(), loaded.params.named_tensors()):
            assert n1 == n2
            np.testing.assert_array_equal(t1.data, t2.data)
        assert loaded.params.config == params.config

    def test_forward_identical_after_roundtrip(self, tmp_path):
        params, loaded, _ = self.roundtrip(tmp_path)
        X, m = small_inputs(params.config, batch=3, seed=11)
        before = M.forward_batch(params, Tensor(X), Tensor(m))
        after = M.forward_batch(loaded.params, Tensor(X), Tensor(m))
        np.testing.assert_array_equal(before.data, after.data)

    def test_scaler_travels_with_checkpoint(self, tmp_path):
        from pvforecast.data import ZScoreScaler

        scaler = ZScoreScaler(
            weather_mean=np.array([0.0, 0.0, 1.5]),
            weather_std=np.array([1.0, 1.0, 2.5]),
            weather_excluded=np.array([True, True, False]),
            metadata_mean=np.array([0.0, 3.0]),
            metadata_std=np.array([1.0, 4.0]),
            metadata_excluded=np.array([True, False]),
        )
        _, loaded, _ = self.roundtrip(tmp_path, scaler=scaler)
        np.testing.assert_array_equal(loaded.scaler.weather_mean, scaler.weather_mean)
        np.testing.assert_array_equal(loaded.scaler.metadata_std, scaler.metadata_std)
        np.testing.assert_array_equal(loaded.scaler.weather_excluded, scaler.weather_excluded)

    def test_bytes_deterministic(self, tmp_path):
        config = small_config()
        params = M.init_params(config, seed=9)
        p1, p2 = str(tmp_path / "a.pvz"), str(tmp_path / "b.pvz")
        M.save_checkpoint(p1, params)
        M.save_checkpoint(p2, params)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            assert f1.read() == f2.read()

    def test_wrong_format_rejected(self, tmp_path):
        path = str(tmp_path / "x.pvz")
        write_container(path, {"format": "pv-dataset"}, {})
        with pytest.raises(DataError, match="not a checkpoint"):
            M.load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        manifest, arrays = read_container(path)
        manifest["schema_version"] = M.CHECKPOINT_SCHEMA_VERSION + 1
        bad = str(tmp_path / "bad.pvz")
        write_container(bad, manifest, arrays)
        with pytest.raises(DataError, match="version"):
            M.load_checkpoint(bad)

    def test_tampered_shape_rejected(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        manifest, arrays = read_container(path)
        arrays["start_token"] = arrays["start_token"][:-1].astype("<f8")
        bad = str(tmp_path / "bad.pvz")
        write_container(bad, manifest, arrays)
        with pytest.raises(DataError, match="shape"):
            M.load_checkpoint(bad)

    def test_missing_parameter_rejected(self, tmp_path):
        _, _, path = self.roundtrip(tmp_path)
        manifest, arrays = read_container(path)
        del arrays["readout.bias"]
        bad = str(tmp_path / "bad.pvz")
        write_container(bad, manifest, arrays)
        with pytest.raises(DataError, match="missing parameter"):
            M.load_checkpoint(bad)

    def test_unknown_kind_rejected(self, tmp_path):
        path = str(tmp_path / "x.pvz")
        write_container(
            path,
            {
                "format": "pv-checkpoint",
                "schema_version": M.CHECKPOINT_SCHEMA_VERSION,
                "kind": "mystery",
            },
            {},
        )
        with pytest.raises(DataError, match="kind"):
            M.load_checkpoint(path)

    def test_oracle_stub(self, tmp_path):
        path = str(tmp_path / "oracle.pvz")
        M.save_oracle_checkpoint(path)
        loaded = M.load_checkpoint(path)
        assert loaded.kind == "oracle"
        assert loaded.params is None
