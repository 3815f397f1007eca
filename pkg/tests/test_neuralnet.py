"""MLP engine: init, forward, gradients, ADAM, training loop."""

import math

import numpy as np
import pytest

from slide import (
    TrainConfig,
    adam_step,
    backward,
    build_mlp,
    forward,
    mse_loss,
    rmse,
    train,
    xavier_init,
)
from slide.errors import ConfigError, ShapeError, TrainingDivergedError
from slide.neuralnet import AdamState, MlpModel


class TestXavierInit:
    def test_bound_formula_100x64(self):
        w = xavier_init((100, 64), seed=0)
        bound = math.sqrt(6.0 / 164.0)
        assert bound == pytest.approx(0.19125, abs=5e-5)
        assert w.shape == (100, 64)
        assert np.abs(w).max() <= bound

    def test_bound_formula_1x1(self):
        w = xavier_init((1, 1), seed=1)
        assert abs(w[0, 0]) <= math.sqrt(3.0)
        many = np.array([xavier_init((1, 1), seed=s)[0, 0] for s in range(200)])
        assert many.max() > 1.0  # the bound sqrt(3) ~ 1.73 is actually used

    def test_deterministic(self):
        assert np.array_equal(xavier_init((8, 5), seed=7), xavier_init((8, 5), seed=7))

    def test_bad_shape(self):
        with pytest.raises(ConfigError):
            xavier_init((0, 4), seed=0)


class TestForward:
    def test_identity_net_collapses_to_matrix_product(self):
        model = build_mlp((6, 10, 4), activation="identity", seed=0,
                          bias_free=True, dtype=np.float64)
        x = np.random.default_rng(1).standard_normal((3, 6))
        collapsed = model.weights[1] @ model.weights[0]
        assert np.allclose(forward(model, x), x @ collapsed.T, atol=1e-12)

    def test_zero_weights_pass_bias_through(self):
        model = build_mlp((4, 3), activation=(), seed=0, dtype=np.float64)
        model.weights[0][:] = 0.0
        model.biases[0][:] = [1.0, -2.0, 0.5]
        out = forward(model, np.ones((5, 4)))
        assert np.allclose(out, [1.0, -2.0, 0.5])

    def test_hand_worked_relu_network(self):
        # x = (1, -1); W1 = [[1, 2], [3, 4]], b1 = (0.5, -6)
        # z1 = (1*1 + 2*(-1) + 0.5, 3*1 + 4*(-1) - 6) = (-0.5, -7) -> relu = (0, 0)
        # x = (2, 1); z1 = (2 + 2 + 0.5, 6 + 4 - 6) = (4.5, 4) -> relu = (4.5, 4)
        # W2 = [[1, -1]], b2 = (0.25,) -> y = 4.5 - 4 + 0.25 = 0.75
        model = MlpModel(
            widths=(2, 2, 1), activations=("relu",),
            weights=[np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0, -1.0]])],
            biases=[np.array([0.5, -6.0]), np.array([0.25])],
            dtype=np.dtype(np.float64),
        )
        out = forward(model, np.array([[1.0, -1.0], [2.0, 1.0]]))
        assert abs(out[0, 0] - 0.25) < 1e-12
        assert abs(out[1, 0] - 0.75) < 1e-12

    def test_single_vector_round_trip(self):
        model = build_mlp((5, 3), activation=(), seed=2)
        vec = forward(model, np.ones(5, dtype=np.float32))
        batch = forward(model, np.ones((1, 5), dtype=np.float32))
        assert vec.shape == (3,)
        assert np.array_equal(vec, batch[0])

    def test_width_mismatch(self):
        model = build_mlp((5, 3), activation=(), seed=0)
        with pytest.raises(ShapeError):
            forward(model, np.ones((2, 4)))

    def test_batch_invariant_bits(self):
        # the same row must produce identical bits alone and inside any batch
        model = build_mlp((20, 16, 8), activation="relu", seed=3, dtype=np.float32)
        x = np.random.default_rng(0).standard_normal((37, 20)).astype(np.float32)
        full = forward(model, x)
        for i in (0, 7, 8, 19, 36):
            assert np.array_equal(forward(model, x[i:i + 1])[0], full[i])
        assert np.array_equal(forward(model, x[:13]), full[:13])


class TestLosses:
    def test_zero_for_equal(self):
        assert mse_loss(np.ones((3, 2)), np.ones((3, 2))) == 0.0

    def test_constant_offset(self):
        pred = np.full((4, 5), 2.5)
        target = np.zeros((4, 5))
        assert mse_loss(pred, target) == pytest.approx(6.25)
        assert rmse(pred, target) == pytest.approx(2.5)

    def test_direct_example(self):
        assert mse_loss(np.array([1.0, 2.0]), np.zeros(2)) == pytest.approx(2.5)
        assert rmse(np.array([1.0, 2.0]), np.zeros(2)) == pytest.approx(1.5811, abs=5e-5)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            mse_loss(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))


class TestBackward:
    def test_zero_loss_zero_gradients(self):
        model = build_mlp((3, 4, 2), activation="tanh", seed=0, dtype=np.float64)
        x = np.random.default_rng(2).standard_normal((5, 3))
        y = forward(model, x)
        gw, gb = backward(model, x, y)
        for g in gw + gb:
            assert np.all(g == 0.0)

    def test_scalar_linear_model_gradient(self):
        # loss = (w x - y)^2, dloss/dw = 2 x (w x - y)
        model = MlpModel(widths=(1, 1), activations=(),
                         weights=[np.array([[3.0]])], biases=None,
                         dtype=np.dtype(np.float64))
        x, y = np.array([[2.0]]), np.array([[1.0]])
        gw, gb = backward(model, x, y)
        assert gb is None
        assert gw[0][0, 0] == pytest.approx(2.0 * 2.0 * (3.0 * 2.0 - 1.0))

    @pytest.mark.parametrize("act", ["relu", "elu", "tanh", "identity"])
    def test_matches_central_differences(self, act):
        rng = np.random.default_rng(hash(act) % 2**32)
        model = build_mlp((4, 6, 5, 3), activation=act, seed=11, dtype=np.float64)
        x = rng.standard_normal((7, 4))
        y = rng.standard_normal((7, 3))
        gw, gb = backward(model, x, y)
        flat_params = model.weights + model.biases
        flat_grads = gw + gb
        eps = 1e-6
        rng2 = np.random.default_rng(5)
        for p, g in zip(flat_params, flat_grads):
            for _ in range(4):
                idx = tuple(rng2.integers(0, s) for s in p.shape)
                orig = p[idx]
                p[idx] = orig + eps
                up = mse_loss(forward(model, x), y)
                p[idx] = orig - eps
                dn = mse_loss(forward(model, x), y)
                p[idx] = orig
                fd = (up - dn) / (2.0 * eps)
                assert abs(fd - g[idx]) / max(1.0, abs(g[idx])) <= 1e-5


class TestAdam:
    def test_zero_gradient_is_a_fixed_point(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], state, lr=1e-3)
        assert np.array_equal(p[0], [1.0, -2.0])
        assert np.all(state.m[0] == 0.0)
        assert np.all(state.v[0] == 0.0)

    def test_first_step_size_is_learning_rate(self):
        p = [np.zeros(1)]
        state = AdamState.for_params(p)
        adam_step(p, [np.ones(1)], state, lr=1e-3)
        assert p[0][0] == pytest.approx(-1e-3, rel=1e-6)
        assert state.t == 1

    def test_bitwise_repeatable(self):
        def run():
            rng = np.random.default_rng(0)
            p = [rng.standard_normal(4)]
            state = AdamState.for_params(p)
            for _ in range(50):
                adam_step(p, [rng.standard_normal(4)], state, lr=1e-2)
            return p[0]

        assert np.array_equal(run(), run())


def linear_toy(n=64):
    x = np.linspace(-1.0, 1.0, n)[:, None]
    return x, 2.0 * x + 1.0


class TestTrain:
    def test_iterations_per_epoch(self):
        x, y = linear_toy(4096)
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        _, rep = train(model, (x, y), (x, y),
                       TrainConfig(epochs=1, batch_size=512, val_every=1))
        assert rep.iterations_per_epoch == 8

    def test_full_batch_is_one_iteration(self):
        x, y = linear_toy(32)
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        _, rep = train(model, (x, y), (x, y),
                       TrainConfig(epochs=1, batch_size=32, val_every=1))
        assert rep.iterations_per_epoch == 1

    def test_convex_toy_converges(self):
        x, y = linear_toy()
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        best, rep = train(model, (x, y), (x, y),
                          TrainConfig(lr=5e-2, epochs=2000, batch_size=8,
                                      val_every=100, seed=0))
        assert rep.best_val_rmse**2 <= 1e-8

    def test_epoch_loss_non_increasing_after_warmup(self):
        x, y = linear_toy(128)
        model = build_mlp((1, 1), activation=(), seed=1, dtype=np.float64)
        _, rep = train(model, (x, y), (x, y),
                       TrainConfig(lr=1e-2, epochs=60, batch_size=16,
                                   val_every=10, seed=2))
        losses = rep.epoch_loss[5:]
        assert all(b <= a * (1.0 + 1e-9) for a, b in zip(losses, losses[1:]))

    def test_snapshot_reproduces_best_validation(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((100, 3)).astype(np.float32)
        y = rng.standard_normal((100, 2)).astype(np.float32)
        xv = rng.standard_normal((30, 3)).astype(np.float32)
        yv = rng.standard_normal((30, 2)).astype(np.float32)
        model = build_mlp((3, 8, 2), activation="relu", seed=0)
        best, rep = train(model, (x, y), (xv, yv),
                          TrainConfig(lr=1e-3, epochs=40, batch_size=10, val_every=5))
        assert rmse(forward(best, xv), yv) == rep.best_val_rmse
        assert rep.best_val_rmse == min(v for _, v in rep.validations)

    def test_deterministic_training(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((64, 4)).astype(np.float32)
        y = rng.standard_normal((64, 2)).astype(np.float32)

        def run():
            model = build_mlp((4, 6, 2), activation="elu", seed=3)
            return train(model, (x, y), (x, y),
                         TrainConfig(lr=1e-3, epochs=30, batch_size=16,
                                     val_every=10, seed=5))

        (best_a, rep_a), (best_b, rep_b) = run(), run()
        assert rep_a.epoch_loss == rep_b.epoch_loss
        assert rep_a.validations == rep_b.validations
        for wa, wb in zip(best_a.weights, best_b.weights):
            assert np.array_equal(wa, wb)

    def test_nan_targets_raise_diverged(self):
        x, y = linear_toy(16)
        y = y.copy()
        y[3] = np.nan
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        with pytest.raises(TrainingDivergedError) as err:
            train(model, (x, y), (x, y), TrainConfig(epochs=3, batch_size=16))
        assert err.value.epoch == 1

    def test_batch_larger_than_dataset_rejected(self):
        x, y = linear_toy(16)
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        with pytest.raises(ConfigError):
            train(model, (x, y), (x, y), TrainConfig(epochs=1, batch_size=32))

    def test_default_batch_is_eighth_of_dataset(self):
        x, y = linear_toy(64)
        model = build_mlp((1, 1), activation=(), seed=0, dtype=np.float64)
        _, rep = train(model, (x, y), (x, y), TrainConfig(epochs=1, val_every=1))
        assert rep.iterations_per_epoch == 8
