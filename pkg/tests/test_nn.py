"""Dense network forward/backward, Adam, and checkpoint round-trips."""

from __future__ import annotations

import numpy as np
import pytest

from gesturelab.errors import FormatError, ShapeError, ValidationError
from gesturelab.nn import (
    AdamState,
    DenseNet,
    Layer,
    adam_step,
    backward,
    build_architecture,
    forward,
    forward_train,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)
from oracles import finite_difference_gradient, max_relative_error


def identity_net(dim=3):
    return DenseNet([Layer(np.eye(dim), np.zeros(dim), "identity")])


class TestForward:
    def test_identity_layer_passes_input_through(self):
        x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
        assert np.array_equal(forward(identity_net(), x), x)

    def test_zero_sigmoid_layer_outputs_half(self):
        net = DenseNet([Layer(np.zeros((4, 3)), np.zeros(4), "sigmoid")])
        out = forward(net, np.ones((2, 3)))
        assert np.allclose(out, 0.5)

    def test_two_layer_hand_computed_case(self):
        # x=[1,1]: z1=[3.5,6.5], relu keeps both; z2=[-3.0,14.5];
        # sigmoid values frozen from scalar math.exp arithmetic.
        net = DenseNet(
            [
                Layer(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, -0.5]), "relu"),
                Layer(np.array([[1.0, -1.0], [2.0, 1.0]]), np.array([0.0, 1.0]), "sigmoid"),
            ]
        )
        out = forward(net, np.array([[1.0, 1.0]]))
        expected = np.array([[0.04742587317756678, 0.9999994956525918]])
        assert np.allclose(out, expected, rtol=0, atol=1e-15)

    def test_relu_clamps_negative_preactivations(self):
        net = DenseNet([Layer(np.eye(2), np.array([-1.0, 1.0]), "relu")])
        out = forward(net, np.array([[0.0, 0.0]]))
        assert out.tolist() == [[0.0, 1.0]]

    def test_sigmoid_outputs_strictly_inside_unit_interval(self):
        # float64 resolves sigmoid(+-30); larger magnitudes saturate exactly
        net = DenseNet([Layer(np.array([[30.0], [-30.0]]), np.zeros(2), "sigmoid")])
        out = forward(net, np.array([[1.0]]))
        assert (out > 0).all() and (out < 1).all()

    def test_dimension_mismatch_names_expectation(self):
        with pytest.raises(ShapeError, match="expects 3"):
            forward(identity_net(3), np.ones((2, 5)))

    def test_chained_dims_validated_at_construction(self):
        with pytest.raises(ShapeError):
            DenseNet(
                [
                    Layer(np.zeros((4, 3)), np.zeros(4), "relu"),
                    Layer(np.zeros((2, 5)), np.zeros(2), "identity"),
                ]
            )


class TestDropout:
    def net(self, rate=0.5):
        return DenseNet([Layer(np.eye(10), np.zeros(10), "identity", dropout=rate)])

    def test_eval_mode_skips_dropout(self):
        x = np.ones((3, 10))
        assert np.array_equal(forward(self.net(), x), x)

    def test_train_mode_is_seed_deterministic(self):
        x = np.ones((4, 10))
        a = forward_train(self.net(), x, seed=5).outputs
        b = forward_train(self.net(), x, seed=5).outputs
        assert np.array_equal(a, b)

    def test_different_seeds_draw_different_masks(self):
        x = np.ones((4, 10))
        a = forward_train(self.net(), x, seed=1).outputs
        b = forward_train(self.net(), x, seed=2).outputs
        assert not np.array_equal(a, b)

    def test_inverted_scaling_preserves_expectation(self):
        x = np.ones((2000, 10))
        out = forward_train(self.net(rate=0.3), x, seed=0).outputs
        assert abs(out.mean() - 1.0) < 0.05

    def test_dropped_units_are_zero_or_scaled(self):
        out = forward_train(self.net(rate=0.5), np.ones((50, 10)), seed=3).outputs
        values = set(np.round(out.reshape(-1), 9).tolist())
        assert values <= {0.0, 2.0}


class TestBackward:
    def test_zero_output_gradient_gives_zero_parameter_gradients(self):
        net = build_architecture("classifier", n_classes=3, input_dim=5,
                                 hidden_dims=(4,), seed=0)
        cache = forward_train(net, np.ones((2, 5)), seed=1)
        grads, input_grad = backward(net, cache, np.zeros((2, 3)))
        assert all(np.all(g == 0) for g in grads)
        assert np.all(input_grad == 0)

    def test_one_layer_linear_hand_case(self):
        # W=[[1,2],[0,1]], x rows e1,e2, targets 0: preds [[1,0],[2,1]],
        # MSE grad 2*pred/4; dW and db worked out by hand.
        net = DenseNet([Layer(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), "identity")])
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        cache = forward_train(net, x, seed=0)
        loss, grad = mse_loss(cache.outputs, np.zeros((2, 2)))
        assert loss == pytest.approx(1.5)
        param_grads, input_grad = backward(net, cache, grad)
        assert np.allclose(param_grads[0], [[0.5, 1.0], [0.0, 0.5]])
        assert np.allclose(param_grads[1], [1.5, 0.5])
        assert np.allclose(input_grad, grad @ net.layers[0].weight)

    def test_cache_consumed_after_one_backward(self):
        net = identity_net(2)
        cache = forward_train(net, np.ones((1, 2)), seed=0)
        backward(net, cache, np.ones((1, 2)))
        with pytest.raises(ValidationError, match="stale"):
            backward(net, cache, np.ones((1, 2)))

    def test_cache_bound_to_its_network(self):
        net = identity_net(2)
        other = identity_net(2)
        cache = forward_train(net, np.ones((1, 2)), seed=0)
        with pytest.raises(ValidationError, match="different network"):
            backward(other, cache, np.ones((1, 2)))

    @pytest.mark.parametrize("kind,kwargs", [
        ("audio_encoder", dict(input_dim=12, hidden_dims=(8, 6), output_dim=5)),
        ("classifier", dict(n_classes=4, input_dim=6, hidden_dims=(5, 4))),
        ("fusion_classifier", dict(n_classes=3, input_dim=10, hidden_dims=(6,))),
    ])
    def test_finite_difference_spot_check(self, kind, kwargs):
        net = build_architecture(kind, seed=7, dropout=0.2, **kwargs)
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, net.input_dim))
        target = rng.random((4, net.output_dim))

        def loss_fn():
            out = forward_train(net, x, seed=99).outputs
            return mse_loss(out, target)[0]

        cache = forward_train(net, x, seed=99)
        _, grad = mse_loss(cache.outputs, target)
        analytic, input_grad = backward(net, cache, grad)
        for param, a in zip(net.parameters(), analytic):
            numeric = finite_difference_gradient(loss_fn, param)
            assert max_relative_error(a, numeric) < 1e-4
        numeric_x = finite_difference_gradient(loss_fn, x)
        assert max_relative_error(input_grad, numeric_x) < 1e-4


class TestMseLoss:
    def test_perfect_prediction_is_zero(self):
        loss, grad = mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_hand_value(self):
        loss, _ = mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        assert loss == pytest.approx(0.5)

    def test_gradient_scale(self):
        _, grad = mse_loss(np.array([1.0]), np.array([0.0]))
        assert grad.tolist() == [2.0]

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            mse_loss(np.array([]), np.array([]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            mse_loss(np.ones(3), np.ones(4))


class TestAdam:
    def test_zero_gradient_no_decay_leaves_params(self):
        params = [np.array([1.0, -2.0])]
        state = AdamState.init(params)
        adam_step(params, [np.zeros(2)], state)
        assert params[0].tolist() == [1.0, -2.0]

    def test_first_step_approximates_lr_times_sign(self):
        params = [np.array([0.0, 0.0])]
        state = AdamState.init(params, learning_rate=0.001)
        adam_step(params, [np.array([3.0, -0.5])], state)
        assert np.allclose(params[0], [-0.001, 0.001], atol=1e-6)

    def test_quadratic_loss_decreases(self):
        params = [np.array([5.0])]
        state = AdamState.init(params, learning_rate=0.05)
        losses = []
        for _ in range(200):
            losses.append(float(params[0][0] ** 2))
            adam_step(params, [2.0 * params[0]], state)
        assert losses[-1] < losses[0] * 0.01

    def test_zero_learning_rate_freezes_params_despite_decay(self):
        params = [np.array([2.0])]
        state = AdamState.init(params, learning_rate=0.0, weight_decay=0.5)
        adam_step(params, [np.array([1.0])], state)
        assert params[0].tolist() == [2.0]

    def test_decay_shrinks_before_update(self):
        params = [np.array([10.0])]
        state = AdamState.init(params, learning_rate=0.1, weight_decay=0.5)
        adam_step(params, [np.zeros(1)], state)
        # zero gradient: only the decoupled decay acts (10 * (1 - 0.1*0.5))
        assert params[0][0] == pytest.approx(9.5)

    def test_non_finite_gradient_aborts(self):
        params = [np.array([1.0])]
        state = AdamState.init(params)
        with pytest.raises(ValidationError, match="non-finite"):
            adam_step(params, [np.array([np.nan])], state)


class TestBuildArchitecture:
    def test_audio_encoder_shape(self):
        net = build_architecture("audio_encoder", seed=0)
        dims = [(l.weight.shape[1], l.weight.shape[0]) for l in net.layers]
        assert dims == [(3024, 1024), (1024, 512), (512, 512), (512, 400)]
        assert [l.activation for l in net.layers] == ["relu", "relu", "relu", "identity"]
        assert all(l.dropout == 0.3 for l in net.layers)

    def test_classifier_widths_track_class_count(self):
        for n in (7, 18):
            net = build_architecture("classifier", n_classes=n, seed=0)
            assert net.input_dim == 400
            assert net.output_dim == n
            assert net.layers[-1].activation == "sigmoid"
            assert net.layers[-1].dropout == 0.0

    def test_fusion_reads_concatenated_width(self):
        net = build_architecture("fusion_classifier", n_classes=7, seed=0)
        assert net.input_dim == 800

    def test_same_seed_same_weights(self):
        a = build_architecture("classifier", n_classes=5, seed=3)
        b = build_architecture("classifier", n_classes=5, seed=3)
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weight, lb.weight)

    def test_initialization_bounded_by_fan_in(self):
        net = build_architecture("classifier", n_classes=5, seed=1)
        for layer in net.layers:
            bound = np.sqrt(6.0 / layer.weight.shape[1])
            assert np.abs(layer.weight).max() <= bound
            assert np.all(layer.bias == 0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValidationError):
            build_architecture("transformer", seed=0)

    def test_classifier_requires_class_count(self):
        with pytest.raises(ValidationError):
            build_architecture("classifier", seed=0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = build_architecture("classifier", n_classes=4, input_dim=6,
                                 hidden_dims=(5,), seed=2)
        path = tmp_path / "net.mgw1"
        save_checkpoint(net, path, {"seed": 2})
        loaded, manifest = load_checkpoint(path)
        assert manifest["kind"] == "classifier"
        assert manifest["seed"] == "2"
        assert len(loaded.layers) == len(net.layers)
        for la, lb in zip(net.layers, loaded.layers):
            assert la.weight.tobytes() == lb.weight.tobytes()
            assert la.bias.tobytes() == lb.bias.tobytes()
            assert la.activation == lb.activation
            assert la.dropout == lb.dropout

    def test_second_save_is_byte_identical(self, tmp_path):
        net = build_architecture("classifier", n_classes=3, input_dim=4,
                                 hidden_dims=(3,), seed=0)
        p1, p2 = tmp_path / "a.mgw1", tmp_path / "b.mgw1"
        save_checkpoint(net, p1)
        save_checkpoint(net, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "net.mgw1"
        path.write_bytes(b"XXXX" + b"\0" * 100)
        with pytest.raises(FormatError, match="MGW1"):
            load_checkpoint(path)

    def test_bad_version_rejected(self, tmp_path):
        net = identity_net(2)
        path = tmp_path / "net.mgw1"
        save_checkpoint(net, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(path)

    def test_truncated_parameters_rejected(self, tmp_path):
        net = identity_net(3)
        path = tmp_path / "net.mgw1"
        save_checkpoint(net, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_forward_agrees_after_round_trip(self, tmp_path):
        net = build_architecture("audio_encoder", input_dim=10, hidden_dims=(8,),
                                 output_dim=6, seed=5)
        path = tmp_path / "enc.mgw1"
        save_checkpoint(net, path)
        loaded, _ = load_checkpoint(path)
        x = np.random.default_rng(0).standard_normal((3, 10))
        assert np.array_equal(forward(net, x), forward(loaded, x))
