"""Layer forward passes against loop oracles and backward passes against
central finite differences (float64)."""

import numpy as np
import pytest

from aedesnet.errors import ConfigError, DimensionError, StateError
from aedesnet.layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    ReLU,
    Sigmoid,
    conv2d,
    dense,
    dropout,
    flatten,
    make_layer,
    maxpool2d,
    relu,
    sigmoid_spec,
    stable_sigmoid,
)
from aedesnet.rng import Rng
from oracles import (
    central_difference,
    conv2d_naive,
    dense_naive,
    max_relative_error,
    maxpool2d_backward_naive,
    maxpool2d_naive,
)

F64 = np.dtype(np.float64)


def _fd_check(layer, x, seed=0):
    """Analytic input/parameter gradients vs central differences on a
    random linear functional of the output."""
    probe_rng = np.random.default_rng(seed)
    out = layer.forward(x, training=True)
    r = probe_rng.normal(size=out.shape)
    grad_x = layer.backward(r.copy())

    def objective():
        return float(np.sum(layer.forward(x, training=False) * r))

    fd_x = central_difference(objective, x)
    assert max_relative_error(grad_x, fd_x) < 1e-7

    for param, grad in zip(layer.params(), layer.grads()):
        fd_p = central_difference(objective, param)
        assert max_relative_error(grad, fd_p) < 1e-7


class TestConv2D:
    @pytest.mark.parametrize("padding,stride", [("valid", 1), ("same", 1),
                                                ("valid", 2), ("same", 2)])
    def test_forward_matches_naive_float64(self, padding, stride, rng):
        layer = Conv2D(conv2d(4, (3, 2), stride=stride, padding=padding))
        layer.initialize((7, 6, 3), Rng(1).substream("conv"), F64)
        x = rng.normal(size=(2, 7, 6, 3))
        got = layer.forward(x)
        want = conv2d_naive(x, layer.weights, layer.bias, stride=stride, padding=padding)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_forward_matches_naive_float32(self, rng):
        layer = Conv2D(conv2d(3, 3, padding="same"))
        layer.initialize((6, 6, 2), Rng(2).substream("conv"), np.dtype(np.float32))
        x = (rng.random((2, 6, 6, 2)).astype(np.float32) - 0.5)
        got = layer.forward(x)
        want = conv2d_naive(x.astype(np.float64), layer.weights.astype(np.float64),
                            layer.bias.astype(np.float64), padding="same")
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-6)

    def test_gradients_match_finite_differences(self, rng):
        layer = Conv2D(conv2d(2, 3, padding="same"))
        layer.initialize((5, 5, 2), Rng(3).substream("conv"), F64)
        _fd_check(layer, rng.normal(size=(2, 5, 5, 2)))

    def test_strided_gradients(self, rng):
        layer = Conv2D(conv2d(2, 2, stride=2, padding="valid"))
        layer.initialize((6, 6, 2), Rng(4).substream("conv"), F64)
        _fd_check(layer, rng.normal(size=(1, 6, 6, 2)))

    def test_he_uniform_init_bounds(self):
        layer = Conv2D(conv2d(8, 3))
        layer.initialize((9, 9, 4), Rng(5).substream("conv"), np.dtype(np.float32))
        limit = np.sqrt(6.0 / (4 * 3 * 3))
        assert np.abs(layer.weights).max() <= limit
        np.testing.assert_array_equal(layer.bias, 0.0)

    def test_same_padding_preserves_size(self):
        layer = Conv2D(conv2d(1, 3, padding="same"))
        out_shape = layer.initialize((11, 7, 1), Rng(0), F64)
        assert out_shape == (11, 7, 1)

    def test_channel_mismatch_rejected(self):
        layer = Conv2D(conv2d(2, 3))
        layer.initialize((5, 5, 3), Rng(0), F64)
        with pytest.raises(DimensionError):
            layer.forward(np.zeros((1, 5, 5, 4)))

    def test_kernel_larger_than_input_rejected(self):
        layer = Conv2D(conv2d(2, 7, padding="valid"))
        with pytest.raises(DimensionError):
            layer.initialize((5, 5, 1), Rng(0), F64)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            conv2d(0, 3)
        with pytest.raises(ConfigError):
            conv2d(4, 3, padding="reflect")


class TestMaxPool2D:
    @pytest.mark.parametrize("window,stride", [((2, 2), 2), ((3, 3), 3), ((2, 2), 1),
                                               ((3, 2), 2)])
    def test_forward_matches_naive(self, window, stride, rng):
        layer = MaxPool2D(maxpool2d(window, stride=stride))
        layer.initialize((8, 8, 3), None, F64)
        x = rng.normal(size=(2, 8, 8, 3))
        np.testing.assert_array_equal(layer.forward(x),
                                      maxpool2d_naive(x, window, stride))

    @pytest.mark.parametrize("stride", [1, 2])
    def test_backward_matches_naive(self, stride, rng):
        layer = MaxPool2D(maxpool2d(2, stride=stride))
        layer.initialize((6, 6, 2), None, F64)
        x = rng.normal(size=(2, 6, 6, 2))
        out = layer.forward(x, training=True)
        grad_out = rng.normal(size=out.shape)
        got = layer.backward(grad_out)
        want = maxpool2d_backward_naive(x, grad_out, (2, 2), stride)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_ties_route_to_first_in_row_major_order(self):
        x = np.ones((1, 4, 4, 1))
        layer = MaxPool2D(maxpool2d(2))
        layer.forward(x, training=True)
        grad = layer.backward(np.ones((1, 2, 2, 1)))
        expect = np.zeros((1, 4, 4, 1))
        expect[0, 0::2, 0::2, 0] = 1.0  # top-left of every window
        np.testing.assert_array_equal(grad, expect)

    def test_gradient_mass_conserved_nonoverlapping(self, rng):
        layer = MaxPool2D(maxpool2d(2, stride=2))
        x = rng.normal(size=(3, 8, 8, 4))
        layer.forward(x, training=True)
        grad_out = rng.normal(size=(3, 4, 4, 4))
        grad_in = layer.backward(grad_out)
        assert grad_in.sum() == pytest.approx(grad_out.sum(), abs=1e-12)

    def test_window_larger_than_input_rejected(self):
        layer = MaxPool2D(maxpool2d(4))
        with pytest.raises(DimensionError):
            layer.initialize((3, 3, 1), None, F64)


class TestDense:
    def test_forward_matches_naive(self, rng):
        layer = Dense(dense(5))
        layer.initialize((7,), Rng(6).substream("dense"), F64)
        x = rng.normal(size=(3, 7))
        np.testing.assert_allclose(layer.forward(x),
                                   dense_naive(x, layer.weights, layer.bias),
                                   rtol=0, atol=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        layer = Dense(dense(4))
        layer.initialize((6,), Rng(7).substream("dense"), F64)
        _fd_check(layer, rng.normal(size=(3, 6)))

    def test_unflattened_input_rejected(self):
        layer = Dense(dense(4))
        with pytest.raises(DimensionError, match="flatten"):
            layer.initialize((4, 4, 2), Rng(0), F64)

    def test_param_count(self):
        layer = Dense(dense(3))
        layer.initialize((2,), Rng(0), F64)
        assert layer.param_count() == 9  # 6 weights + 3 biases


class TestDropout:
    def test_inference_is_bit_exact_identity(self, rng):
        layer = Dropout(dropout(0.5))
        layer.initialize((10,), Rng(8).substream("drop"), F64)
        x = rng.normal(size=(4, 10))
        out = layer.forward(x, training=False)
        assert out is x  # no copy, no scaling

    def test_training_mask_values(self, rng):
        rate = 0.25
        layer = Dropout(dropout(rate))
        layer.initialize((50,), Rng(9).substream("drop"), F64)
        x = np.ones((20, 50))
        out = layer.forward(x, training=True)
        kept = np.unique(out)
        np.testing.assert_allclose(sorted(kept), [0.0, 1.0 / (1.0 - rate)])

    def test_expected_value_preserved(self):
        layer = Dropout(dropout(0.5))
        layer.initialize((1000,), Rng(10).substream("drop"), F64)
        x = np.ones((50, 1000))
        out = layer.forward(x, training=True)
        assert out.mean() == pytest.approx(1.0, abs=0.02)

    def test_backward_reuses_forward_mask(self, rng):
        layer = Dropout(dropout(0.4))
        layer.initialize((30,), Rng(11).substream("drop"), F64)
        x = rng.normal(size=(5, 30))
        out = layer.forward(x, training=True)
        mask = np.where(x != 0, out / np.where(x != 0, x, 1.0), 0.0)
        grad = rng.normal(size=x.shape)
        np.testing.assert_allclose(layer.backward(grad), grad * mask, rtol=1e-12)

    def test_same_stream_same_mask(self, rng):
        x = rng.normal(size=(3, 8))
        masks = []
        for _ in range(2):
            layer = Dropout(dropout(0.5))
            layer.initialize((8,), Rng(12).substream("drop", 0), F64)
            out = layer.forward(x.copy(), training=True)
            masks.append(out)
        np.testing.assert_array_equal(masks[0], masks[1])

    def test_rate_validation(self):
        with pytest.raises(ConfigError):
            dropout(1.0)
        with pytest.raises(ConfigError):
            dropout(-0.1)

    def test_training_without_rng_rejected(self):
        layer = Dropout(dropout(0.5))
        layer.initialize((4,), None, F64)
        with pytest.raises(StateError):
            layer.forward(np.ones((1, 4)), training=True)


class TestFlattenReluSigmoid:
    def test_flatten_roundtrip_bit_exact(self, rng):
        layer = Flatten(flatten())
        assert layer.initialize((4, 3, 2), None, F64) == (24,)
        x = rng.normal(size=(5, 4, 3, 2))
        out = layer.forward(x, training=True)
        assert out.shape == (5, 24)
        np.testing.assert_array_equal(out.reshape(x.shape), x)
        grad = rng.normal(size=out.shape)
        np.testing.assert_array_equal(layer.backward(grad), grad.reshape(x.shape))

    def test_relu_values_and_subgradient_at_zero(self):
        layer = ReLU(relu())
        layer.initialize((4,), None, F64)
        x = np.array([[-2.0, 0.0, 3.0, -0.5]])
        np.testing.assert_array_equal(layer.forward(x, training=True),
                                      [[0.0, 0.0, 3.0, 0.0]])
        grad = layer.backward(np.ones((1, 4)))
        # the subgradient at exactly zero is zero
        np.testing.assert_array_equal(grad, [[0.0, 0.0, 1.0, 0.0]])

    def test_sigmoid_gradient_matches_finite_differences(self, rng):
        layer = Sigmoid(sigmoid_spec())
        layer.initialize((6,), None, F64)
        _fd_check(layer, rng.normal(size=(2, 6)))


class TestStableSigmoid:
    def test_zero_is_exactly_half(self):
        assert stable_sigmoid(np.array([0.0]))[0] == 0.5

    def test_known_value(self):
        got = stable_sigmoid(np.array([1.0]))[0]
        assert got == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), rel=1e-15)

    def test_symmetry(self):
        x = np.linspace(-50.0, 50.0, 1000)
        total = stable_sigmoid(x) + stable_sigmoid(-x)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_no_overflow_at_extreme_inputs(self):
        with np.errstate(over="raise"):
            out = stable_sigmoid(np.array([-1e4, -500.0, 500.0, 1e4]))
        np.testing.assert_allclose(out, [0.0, 0.0, 1.0, 1.0], atol=1e-30)
        assert np.isfinite(out).all()


class TestCacheDiscipline:
    @pytest.mark.parametrize("spec,in_shape,x_shape", [
        (conv2d(2, 3, padding="same"), (4, 4, 1), (1, 4, 4, 1)),
        (maxpool2d(2), (4, 4, 1), (1, 4, 4, 1)),
        (dense(2), (4,), (1, 4)),
        (dropout(0.3), (4,), (1, 4)),
        (flatten(), (2, 2), (1, 2, 2)),
        (relu(), (4,), (1, 4)),
        (sigmoid_spec(), (4,), (1, 4)),
    ])
    def test_backward_needs_training_forward(self, spec, in_shape, x_shape, rng):
        layer = make_layer(spec)
        layer.initialize(in_shape, Rng(13).substream(spec.kind), F64)
        x = rng.normal(size=x_shape)
        out = layer.forward(x, training=True)
        layer.backward(np.ones_like(out))
        with pytest.raises(StateError):
            layer.backward(np.ones_like(out))  # cache already consumed
        layer.forward(x, training=False)
        with pytest.raises(StateError):
            layer.backward(np.ones_like(out))  # inference pass caches nothing
