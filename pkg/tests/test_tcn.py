import numpy as np
import pytest

from tcndetect.errors import ConfigError, TrainingDivergedError
from tcndetect.tcn import (
    ConvLayer,
    TcnConfig,
    TcnModel,
    dilated_causal_conv,
    receptive_field,
    train,
)


def direct_conv(x, weights, bias, dilation):
    """Tap-by-tap evaluation of the dilated causal convolution: for each
    position s, sum_i W[i] . x[s - d*i] with out-of-range reads as zero."""
    length, _ = x.shape
    k, _, c_out = weights.shape
    out = np.tile(bias, (length, 1)).astype(float)
    for s in range(length):
        for i in range(k):
            src = s - dilation * i
            if src >= 0:
                out[s] += x[src] @ weights[i]
    return out


def small_config(**overrides):
    defaults = dict(
        input_channels=3, output_units=3, filters=4, kernel=3, dilations=(1, 2), seed=5
    )
    defaults.update(overrides)
    return TcnConfig(**defaults)


def randomize(model, seed, include_bias=True):
    """Fill every parameter with random values (fresh models start with a
    zeroed conv path, which would make probes vacuous)."""
    rng = np.random.default_rng(seed)
    for name, arr in model.parameters():
        if include_bias or name.endswith(".weight"):
            arr[...] = rng.normal(scale=0.4, size=arr.shape)
    return model


class TestDilatedConv:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(30, 1))
        for d in (1, 2, 4, 7):
            w = np.zeros((3, 1, 1))
            w[0, 0, 0] = 1.0
            layer = ConvLayer(weights=w, bias=np.zeros(1), dilation=d)
            np.testing.assert_array_equal(dilated_causal_conv(x, layer), x)

    def test_hand_summed_example(self):
        x = np.array([1.0, 2, 3, 4, 5]).reshape(5, 1)
        layer = ConvLayer(weights=np.ones((3, 1, 1)), bias=np.zeros(1), dilation=2)
        out = dilated_causal_conv(x, layer)
        np.testing.assert_array_equal(out.ravel(), [1, 2, 4, 6, 9])
        assert out[4, 0] == 9.0  # x[4] + x[2] + x[0]

    def test_zero_input_zero_bias(self):
        layer = ConvLayer(
            weights=np.random.default_rng(1).normal(size=(3, 2, 4)),
            bias=np.zeros(4),
            dilation=3,
        )
        out = dilated_causal_conv(np.zeros((10, 2)), layer)
        np.testing.assert_array_equal(out, np.zeros((10, 4)))

    def test_matches_direct_evaluation(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            length = int(rng.integers(1, 65))
            k = int(rng.integers(2, 6))
            d = int(rng.integers(1, 9))
            c_in = int(rng.integers(1, 5))
            c_out = int(rng.integers(1, 5))
            x = rng.normal(size=(length, c_in))
            layer = ConvLayer(
                weights=rng.normal(size=(k, c_in, c_out)),
                bias=rng.normal(size=c_out),
                dilation=d,
            )
            got = dilated_causal_conv(x, layer)
            want = direct_conv(x, layer.weights, layer.bias, d)
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_batched_matches_per_sequence(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 12, 2))
        layer = ConvLayer(weights=rng.normal(size=(3, 2, 5)), bias=rng.normal(size=5), dilation=2)
        batched = dilated_causal_conv(x, layer)
        for b in range(4):
            np.testing.assert_allclose(batched[b], dilated_causal_conv(x[b], layer), atol=1e-12)

    def test_channel_mismatch_raises(self):
        layer = ConvLayer(weights=np.zeros((2, 3, 1)), bias=np.zeros(1), dilation=1)
        with pytest.raises(ValueError):
            dilated_causal_conv(np.zeros((5, 2)), layer)


class TestForward:
    def test_deterministic(self):
        model = TcnModel.build(small_config())
        x = np.random.default_rng(0).normal(size=(6, 10, 3))
        a = model.forward(x)
        b = model.forward(x)
        np.testing.assert_array_equal(a, b)

    def test_output_shape(self):
        cfg = TcnConfig(input_channels=15, output_units=15, filters=8, dilations=(1, 2), seed=0)
        model = TcnModel.build(cfg)
        out = model.forward(np.zeros((7, 19, 15)))
        assert out.shape == (7, 15)

    def test_linear_build_is_homogeneous(self):
        # with identity activation and zero biases the pre-head features
        # are linear in the input, so doubling the input doubles them
        model = randomize(
            TcnModel.build(small_config(activation="identity")), seed=77, include_bias=False
        )
        x = np.random.default_rng(1).normal(size=(2, 8, 3))
        f1 = model.features(x)
        f2 = model.features(2.0 * x)
        np.testing.assert_allclose(f2, 2.0 * f1, rtol=1e-12)

    def test_same_seed_same_weights(self):
        a = TcnModel.build(small_config())
        b = TcnModel.build(small_config())
        for (_, wa), (_, wb) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(wa, wb)

    def test_channel_mismatch(self):
        model = TcnModel.build(small_config())
        with pytest.raises(ValueError):
            model.forward(np.zeros((1, 5, 7)))

    def test_predict_chunks_match_forward(self):
        model = TcnModel.build(small_config())
        x = np.random.default_rng(2).normal(size=(11, 9, 3))
        np.testing.assert_array_equal(model.predict(x, chunk=4), model.forward(x))


class TestCausality:
    def test_perturbation_never_leaks_backward(self):
        rng = np.random.default_rng(10)
        for trial in range(10):
            cfg = TcnConfig(
                input_channels=int(rng.integers(1, 4)),
                output_units=2,
                filters=int(rng.integers(2, 6)),
                kernel=int(rng.integers(2, 4)),
                dilations=tuple(rng.choice([1, 2, 4], size=rng.integers(1, 3), replace=False)),
                seed=trial,
            )
            model = randomize(TcnModel.build(cfg), seed=100 + trial)
            length = 16
            x = rng.normal(size=(1, length, cfg.input_channels))
            base = model.features(x)
            s = int(rng.integers(0, length))
            bumped = x.copy()
            bumped[0, s, :] += rng.normal(size=cfg.input_channels) + 1.0
            out = model.features(bumped)
            np.testing.assert_array_equal(out[0, :s, :], base[0, :s, :])
            assert not np.array_equal(out[0, s:, :], base[0, s:, :])

    def test_receptive_field_probe(self):
        # inputs further back than the receptive field cannot reach the head
        cfg = small_config(kernel=2, dilations=(1, 2))
        rf = receptive_field(cfg)  # 1 + 2*1*3 = 7
        model = randomize(TcnModel.build(cfg), seed=55)
        length = 20
        x = np.random.default_rng(4).normal(size=(1, length, 3))
        base = model.forward(x)
        for pos in range(0, length - rf):
            bumped = x.copy()
            bumped[0, pos, :] += 5.0
            np.testing.assert_array_equal(model.forward(bumped), base)
        bumped = x.copy()
        bumped[0, length - rf, :] += 5.0
        assert not np.array_equal(model.forward(bumped), base)


class TestReceptiveField:
    def test_stock_architecture(self):
        cfg = TcnConfig(input_channels=15, output_units=15)
        assert cfg.dilations == (1, 2, 4, 8, 16, 32)
        assert receptive_field(cfg) == 1 + 2 * 2 * 63  # 253

    def test_single_dilation(self):
        cfg = TcnConfig(input_channels=1, output_units=1, dilations=(1,))
        assert receptive_field(cfg) == 5

    def test_stacks_multiply(self):
        cfg = TcnConfig(input_channels=1, output_units=1, dilations=(1, 2), stacks=3)
        assert receptive_field(cfg) == 1 + 2 * 2 * 3 * 3


class TestBackward:
    def test_perfect_fit_has_zero_loss(self):
        model = TcnModel.build(small_config())
        x = np.random.default_rng(5).normal(size=(4, 10, 3))
        y = model.forward(x)
        grads, loss = model.backward(x, y)
        assert loss == 0.0
        np.testing.assert_array_equal(grads["head.bias"], np.zeros(3))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        cfg = small_config()
        model = TcnModel.build(cfg)
        x = rng.normal(size=(3, 12, 3))
        y = rng.normal(size=(3, 3))
        grads, _ = model.backward(x, y)

        def loss_at():
            return float(np.mean((model.forward(x) - y) ** 2))

        eps = 1e-5
        for name, arr in model.parameters():
            flat = arr.ravel()
            probe = np.linspace(0, flat.size - 1, num=min(flat.size, 12), dtype=int)
            for j in probe:
                orig = flat[j]
                flat[j] = orig + eps
                up = loss_at()
                flat[j] = orig - eps
                down = loss_at()
                flat[j] = orig
                fd = (up - down) / (2 * eps)
                g = grads[name].ravel()[j]
                assert abs(fd - g) <= 1e-4 * max(abs(fd), abs(g), 1e-6), name

    def test_zero_model_gradient_negates_with_targets(self):
        model = TcnModel.build(small_config())
        for _, arr in model.parameters():
            arr[...] = 0.0  # prediction is identically zero
        x = np.random.default_rng(7).normal(size=(4, 8, 3))
        y = np.random.default_rng(8).normal(size=(4, 3))
        g_pos, _ = model.backward(x, y)
        g_neg, _ = model.backward(x, -y)
        np.testing.assert_allclose(g_neg["head.bias"], -g_pos["head.bias"], atol=1e-15)

    def test_gradient_linear_in_residual(self):
        model = TcnModel.build(small_config())
        rng = np.random.default_rng(9)
        x = rng.normal(size=(4, 8, 3))
        y = rng.normal(size=(4, 3))
        g_pos, _ = model.backward(x, y)
        g_neg, _ = model.backward(x, -y)
        g_zero, _ = model.backward(x, np.zeros_like(y))
        np.testing.assert_allclose(
            g_pos["head.bias"] + g_neg["head.bias"], 2.0 * g_zero["head.bias"], atol=1e-12
        )


class TestTraining:
    def test_constant_target_sanity_task(self):
        rng = np.random.default_rng(20)
        x = rng.normal(size=(512, 8, 2))
        y = np.full((512, 2), 0.37)
        cfg = TcnConfig(
            input_channels=2, output_units=2, filters=4, kernel=2, dilations=(1,),
            max_epochs=50, patience=50, batch_size=16, seed=2, learning_rate=1e-2,
        )
        model = train(TcnModel.build(cfg), x, y)
        assert min(model.history["val_loss"]) < 1e-3

    def test_early_stopping_bound(self):
        rng = np.random.default_rng(21)
        x = rng.normal(size=(40, 6, 2))
        y = rng.normal(size=(40, 2))
        cfg = TcnConfig(
            input_channels=2, output_units=2, filters=3, kernel=2, dilations=(1,),
            max_epochs=200, patience=4, batch_size=8, seed=3,
        )
        model = train(TcnModel.build(cfg), x, y)
        history = model.history["val_loss"]
        best_epoch = int(np.argmin(history))
        assert len(history) <= best_epoch + 1 + cfg.patience
        assert len(history) < cfg.max_epochs

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(22)
        x = rng.normal(size=(32, 6, 2))
        y = rng.normal(size=(32, 2))
        cfg = TcnConfig(
            input_channels=2, output_units=2, filters=3, kernel=2, dilations=(1,),
            max_epochs=5, patience=5, batch_size=8, seed=4,
        )
        a = train(TcnModel.build(cfg), x, y)
        b = train(TcnModel.build(cfg), x, y)
        for (_, wa), (_, wb) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(wa, wb)
        assert a.history == b.history

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_non_finite_loss_aborts_with_diagnostics(self):
        x = np.full((16, 4, 1), 1e160)
        y = np.full((16, 1), -1e160)
        cfg = TcnConfig(
            input_channels=1, output_units=1, filters=2, kernel=2, dilations=(1,),
            max_epochs=5, patience=5, batch_size=4, learning_rate=1e3, seed=5,
        )
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(TcnModel.build(cfg), x, y)

    def test_dropout_switch_trains(self):
        rng = np.random.default_rng(23)
        x = rng.normal(size=(24, 6, 2))
        y = rng.normal(size=(24, 2))
        cfg = TcnConfig(
            input_channels=2, output_units=2, filters=3, kernel=2, dilations=(1,),
            dropout=0.25, max_epochs=3, patience=3, batch_size=8, seed=6,
        )
        a = train(TcnModel.build(cfg), x, y)
        b = train(TcnModel.build(cfg), x, y)
        assert a.history == b.history  # dropout masks are seeded


class TestBundleSerialization:
    def test_round_trip_bitwise(self):
        model = TcnModel.build(small_config())
        x = np.random.default_rng(30).normal(size=(5, 9, 3))
        doc = model.to_json()
        again = TcnModel.from_json(doc)
        np.testing.assert_array_equal(again.forward(x), model.forward(x))

    def test_weight_order_documented(self):
        model = TcnModel.build(small_config())
        names = [name for name, _ in model.parameters()]
        assert names[0] == "block0.conv1.weight"
        assert names[-2:] == ["head.weight", "head.bias"]
        assert "block0.projection.weight" in names  # 3 channels -> 4 filters


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kernel": 1},
            {"filters": 0},
            {"dilations": ()},
            {"dilations": (0,)},
            {"activation": "tanh"},
            {"dropout": 1.0},
            {"validation_fraction": 0.0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        base = dict(input_channels=3, output_units=3)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            TcnConfig(**base)
