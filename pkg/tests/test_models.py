import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refflow import oracles
from refflow.bridge import velocity_from_mean
from refflow.errors import InputError
from refflow.experiments import fm_single_point
from refflow.models import (
    MlpModel,
    SpgBatch,
    SpgModel,
    TrainConfig,
    fm_loss,
    fm_train,
    gates,
    init_mlp_params,
    init_spg_params,
    leave_one_out_mask,
    load_params,
    mlp_forward,
    model_mean,
    save_params,
    spg_anchor,
    spg_forward,
    spg_losses,
    spg_train,
    stopped_anchor,
)
from refflow.models.nn import SGD, mlp_apply, time_features
from refflow.posterior import DataSet
from refflow.verify import fm_gradient_error, spg_gradient_error, stop_gradient_deviation, tiny_spg, tiny_spg_batch


class TestMlp:
    def test_time_features(self):
        np.testing.assert_allclose(time_features(0.25, 2), [[0.25, 1.0, 0.0]] * 2, atol=1e-15)

    def test_input_width(self):
        assert init_mlp_params(4, (6,)).arrays["mlp.W0"].shape == (6, 7)

    def test_zero_weights_zero_output(self, rng):
        p = init_mlp_params(2, (5, 5))
        for k in p.arrays:
            p.arrays[k][:] = 0.0
        assert not mlp_forward(p, rng.normal(size=(3, 2)), 0.4).any()

    def test_pure(self, rng):
        p = init_mlp_params(2, (5,))
        x = rng.normal(size=(3, 2))
        np.testing.assert_array_equal(mlp_forward(p, x, 0.3), mlp_forward(p, x, 0.3))

    def test_affine_when_no_hidden(self, rng):
        p = init_mlp_params(3, ())
        x, t = rng.normal(size=3), 0.7
        z = np.concatenate([x, [t, np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]])
        want = p.arrays["mlp.W0"] @ z + p.arrays["mlp.b0"]
        np.testing.assert_allclose(mlp_forward(p, x, t), want, rtol=0, atol=1e-12)

    def test_dim_check(self):
        with pytest.raises(InputError):
            mlp_forward(init_mlp_params(2, (3,)), np.zeros(3), 0.1)


class TestFmLoss:
    def test_zero_when_model_matches(self, rng):
        p = init_mlp_params(2, ())
        for k in p.arrays:
            p.arrays[k][:] = 0.0
        p.arrays["mlp.b0"][:] = [1.0, -2.0]
        x0 = rng.normal(size=(5, 2))
        assert fm_loss(p, x0, x0 + [1.0, -2.0], rng.uniform(0, 1, 5)) == 0.0

    def test_zero_model(self, rng):
        p = init_mlp_params(2, (3,))
        for k in p.arrays:
            p.arrays[k][:] = 0.0
        x0, x1 = rng.normal(size=(2, 6, 2))
        assert fm_loss(p, x0, x1, rng.uniform(0, 1, 6)) == pytest.approx(np.mean(np.sum((x1 - x0) ** 2, 1)))

    def test_gradient(self):
        assert fm_gradient_error() <= 1e-4

    def test_zero_steps_returns_init(self):
        data = DataSet(np.random.default_rng(0).normal(size=(20, 2)))
        init = init_mlp_params(2, (4,), seed=3)
        out = fm_train(data, TrainConfig(steps=0, hidden=(4,)), init=init)
        for k in init.arrays:
            np.testing.assert_array_equal(out.arrays[k], init.arrays[k])

    def test_single_point_fit(self):
        fit = fm_single_point()
        assert fit.relative_mse <= 0.05
        assert fit.loss_drop >= 0.5


class TestModelMean:
    def test_zero_model_is_identity(self, rng):
        p = init_mlp_params(2, (3,))
        for k in p.arrays:
            p.arrays[k][:] = 0.0
        x = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(model_mean(p, x, 0.3), x)

    def test_round_trip(self, rng):
        p = init_mlp_params(2, (5,), seed=1)
        x, t = rng.normal(size=(4, 2)), 0.6
        np.testing.assert_allclose(velocity_from_mean(x, model_mean(p, x, t), t), mlp_forward(p, x, t),
                                   rtol=0, atol=1e-12)

    def test_perfect_single_point_model(self, rng):
        # a provider whose velocity is exactly (p - x)/(1 - t) must give mean p
        target = np.array([0.5, -1.0])

        class Exact(MlpModel):
            def velocity(self, x, t):
                return (target - x) / (1 - t)

        m = Exact(init_mlp_params(2, ()))
        for t in (0.0, 0.3, 0.9):
            x = rng.normal(size=2)
            np.testing.assert_allclose(x + (1 - t) * m.velocity(x, t), target, atol=1e-12)


class TestSpgParts:
    def test_gates_start_at_half(self):
        p = init_spg_params(2, seed=0)
        g, a = gates(p, np.linspace(0, 0.99, 7))
        np.testing.assert_array_equal(g, 0.5)
        np.testing.assert_array_equal(a, 0.5)

    def test_zero_query_uniform_attention(self, rng):
        p = init_spg_params(2, key_dim=3, seed=0)
        p.arrays["q.W"][:] = 0.0
        refs = rng.normal(size=(6, 2))
        xbar, attn = spg_anchor(p, rng.normal(size=2), refs)
        np.testing.assert_allclose(attn, 1 / 6, atol=1e-15)
        np.testing.assert_allclose(xbar, refs.mean(axis=0), atol=1e-14)

    def test_single_reference(self, rng):
        p = init_spg_params(2, seed=0)
        r = rng.normal(size=(1, 2))
        xbar, attn = spg_anchor(p, rng.normal(size=2), r)
        np.testing.assert_array_equal(attn, [1.0])
        np.testing.assert_array_equal(xbar, r[0])

    def test_attention_direct_softmax(self, rng):
        p = init_spg_params(3, key_dim=4, seed=2)
        refs, x = rng.normal(size=(5, 3)), rng.normal(size=3)
        q = p.arrays["q.W"] @ x + p.arrays["q.b"]
        logits = [q @ (p.arrays["k.W"] @ r + p.arrays["k.b"]) for r in refs]
        assert oracles.rel_err(spg_anchor(p, x, refs)[1], oracles.direct_softmax(logits)) <= 1e-10

    def test_forced_gates(self, rng):
        p = init_spg_params(1, seed=0)
        refs = np.array([[2.0]])
        x = np.array([0.0])
        assert spg_forward(p, x, 0.4, refs, force_gates=(1.0, 0.0))[0] == 2.0
        assert spg_forward(p, x, 0.4, refs, force_gates=(0.0, 0.0))[0] == 0.0
        assert spg_forward(p, x, 0.4, refs, force_gates=(0.5, 0.0))[0] == 1.0

    def test_rejects_t_one(self):
        p = init_spg_params(1, seed=0)
        with pytest.raises(InputError):
            spg_forward(p, [0.0], 1.0, [[1.0]])

    @given(st.integers(2, 12))
    def test_leave_one_out_mask(self, m):
        allowed = leave_one_out_mask(m)
        assert not allowed.diagonal().any()
        assert np.all(allowed.sum(axis=1) == m - 1)

    def test_masked_rows_never_empty(self):
        masked = np.array([True, True, False])
        allowed = leave_one_out_mask(3, masked)
        assert allowed.any(axis=1).all() and not allowed.diagonal().any()

    def test_loo_needs_two(self):
        with pytest.raises(InputError):
            leave_one_out_mask(1)

    def test_own_endpoint_gets_zero_attention(self, rng):
        p = tiny_spg(0)
        b = tiny_spg_batch(rng, m=6, masked=False)
        from refflow.models.spg import _attention
        A, _, _ = _attention(p.arrays, b.x_t, b.x1, b.allowed)
        assert np.all(A.diagonal() == 0.0)
        assert np.all((A > 0).sum(axis=1) == 5)


class TestSpgLosses:
    def test_ref_loss_zero_for_exact_refiner(self, rng):
        p = tiny_spg(0)
        b = tiny_spg_batch(rng, m=4)
        for k in p.arrays:
            if k.startswith("refiner."):
                p.arrays[k][:] = 0.0
        shift = np.array([0.3, -0.7])
        last = max(k for k in p.arrays if k.startswith("refiner.b"))
        p.arrays[last][:] = shift
        # the refiner now outputs `shift` everywhere, which is exactly x1 - anchor
        assert spg_losses(p, b, anchor_sg=b.x1 - shift)[1] == pytest.approx(0.0, abs=1e-28)

    def test_gradient(self):
        assert spg_gradient_error() <= 1e-4

    def test_stop_gradient(self):
        ref, mu, fd = stop_gradient_deviation()
        assert ref <= 1e-10
        assert mu > 0
        assert fd <= 1e-8

    def test_training_reduces_probe_loss(self):
        rng = np.random.default_rng(0)
        data = DataSet(np.vstack([rng.normal(-2, 0.4, (60, 2)), rng.normal(2, 0.4, (60, 2))]),
                       np.repeat([0, 1], 60))
        p = spg_train(data, TrainConfig(steps=300, hidden=(16,), reference_size=32))
        assert p.history[-1][3] < p.history[0][3]

    def test_model_velocity_consistent(self, rng):
        p = tiny_spg(1)
        refs = DataSet(rng.normal(size=(5, 2)))
        m = SpgModel(p, refs)
        x = rng.normal(size=(3, 2))
        np.testing.assert_allclose(m.velocity(x, 0.4), (m.mean(x, 0.4) - x) / 0.6, atol=1e-12)


class TestTraining:
    @pytest.mark.parametrize("kw", [{"steps": -1}, {"lr": 0.0}, {"optimizer": "adam"}, {"eps_train": 0.0},
                                    {"mask_prob": 1.0}, {"key_dim": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(InputError):
            TrainConfig(**kw)

    def test_sgd_clips_global_norm(self):
        arrays = {"w": np.zeros(2)}
        SGD(1.0, momentum=0.0, clip=1.0).step(arrays, {"w": np.array([30.0, 40.0])})
        np.testing.assert_allclose(arrays["w"], [-0.6, -0.8])

    def test_fm_training_deterministic(self):
        data = DataSet(np.random.default_rng(1).normal(size=(50, 2)))
        cfg = TrainConfig(steps=20, hidden=(8,), batch_size=16)
        a, b = fm_train(data, cfg), fm_train(data, cfg)
        for k in a.arrays:
            np.testing.assert_array_equal(a.arrays[k], b.arrays[k])


class TestCheckpoint:
    def test_mlp_round_trip(self, tmp_path):
        p = init_mlp_params(3, (4, 5), seed=7)
        save_params(tmp_path / "m.json", p)
        q = load_params(tmp_path / "m.json")
        assert q.hidden == (4, 5) and q.dim == 3
        for k in p.arrays:
            np.testing.assert_array_equal(p.arrays[k], q.arrays[k])

    def test_spg_round_trip(self, tmp_path):
        p = tiny_spg(2)
        save_params(tmp_path / "s.json", p)
        q = load_params(tmp_path / "s.json")
        x = np.array([0.1, -0.3])
        refs = np.random.default_rng(0).normal(size=(4, 2))
        np.testing.assert_array_equal(spg_forward(p, x, 0.3, refs), spg_forward(q, x, 0.3, refs))

    def test_rejects_foreign(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(InputError):
            load_params(tmp_path / "x.json")
