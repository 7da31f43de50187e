"""Network layers with hand-written forward and backward passes.

Layer hyperparameters live in immutable LayerSpec records; runtime layer
objects own the materialized weights plus the forward cache the backward
pass consumes.  Batches are (N, H, W, C) for spatial layers and
(N, features) after flattening.  Convolution is cross-correlation (no
kernel flip); hidden activations are ReLU; the output activation is the
numerically stable sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .rng import Rng

KINDS = ("conv2d", "maxpool2d", "dense", "dropout", "flatten", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """Kind tag plus the hyperparameters that kind needs."""

    kind: str
    out_channels: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: str = "valid"
    window: tuple[int, int] = (0, 0)
    out_features: int = 0
    rate: float = 0.0


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    return (int(v[0]), int(v[1]))


def conv2d(out_channels: int, kernel, stride: int = 1, padding: str = "valid") -> LayerSpec:
    kh, kw = _pair(kernel)
    if out_channels < 1 or kh < 1 or kw < 1 or stride < 1:
        raise ConfigError(f"conv2d dimensions must be positive, got "
                          f"out_channels={out_channels} kernel={(kh, kw)} stride={stride}")
    if padding not in ("valid", "same"):
        raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")
    return LayerSpec(kind="conv2d", out_channels=out_channels, kernel=(kh, kw),
                     stride=stride, padding=padding)


def maxpool2d(window=2, stride: int | None = None) -> LayerSpec:
    wh, ww = _pair(window)
    stride = stride if stride is not None else wh
    if wh < 1 or ww < 1 or stride < 1:
        raise ConfigError(f"maxpool2d dimensions must be positive, got "
                          f"window={(wh, ww)} stride={stride}")
    return LayerSpec(kind="maxpool2d", window=(wh, ww), stride=stride)


def dense(out_features: int) -> LayerSpec:
    if out_features < 1:
        raise ConfigError(f"dense out_features must be positive, got {out_features}")
    return LayerSpec(kind="dense", out_features=out_features)


def dropout(rate: float) -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    return LayerSpec(kind="dropout", rate=float(rate))


def flatten() -> LayerSpec:
    return LayerSpec(kind="flatten")


def relu() -> LayerSpec:
    return LayerSpec(kind="relu")


def sigmoid_spec() -> LayerSpec:
    return LayerSpec(kind="sigmoid")


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """1 / (1 + e^-x), evaluated branch-wise so no exponent overflows."""
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _he_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Shared interface: initialize -> forward (-> backward in training)."""

    spec: LayerSpec

    def initialize(self, in_shape: tuple[int, ...], rng: Rng | None, dtype) -> tuple[int, ...]:
        """Materialize parameters for the given input shape; returns output shape."""
        raise NotImplementedError

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def _take_cache(self, name: str = "cache"):
        cache = getattr(self, name, None)
        if cache is None:
            raise StateError(
                f"{type(self).__name__}.backward called without a training-mode forward"
            )
        setattr(self, name, None)
        return cache


def _conv_geometry(h: int, w: int, kernel: tuple[int, int], stride: int,
                   padding: str) -> tuple[int, int, tuple[int, int, int, int]]:
    """Output size and (top, bottom, left, right) zero-padding amounts."""
    kh, kw = kernel
    if padding == "same":
        out_h = -(-h // stride)
        out_w = -(-w // stride)
        pad_h = max((out_h - 1) * stride + kh - h, 0)
        pad_w = max((out_w - 1) * stride + kw - w, 0)
        pads = (pad_h // 2, pad_h - pad_h // 2, pad_w // 2, pad_w - pad_w // 2)
    else:
        if kh > h or kw > w:
            raise DimensionError(
                f"kernel {kernel} larger than input {(h, w)} with valid padding"
            )
        out_h = (h - kh) // stride + 1
        out_w = (w - kw) // stride + 1
        pads = (0, 0, 0, 0)
    return out_h, out_w, pads


def _im2col(x: np.ndarray, kernel: tuple[int, int], stride: int,
            out_h: int, out_w: int) -> np.ndarray:
    """Gather (kh, kw, C) patches into rows ordered (dy, dx, channel)."""
    n, _, _, c = x.shape
    kh, kw = kernel
    cols = np.empty((n, out_h, out_w, kh * kw * c), dtype=x.dtype)
    idx = 0
    for dy in range(kh):
        for dx in range(kw):
            cols[..., idx * c:(idx + 1) * c] = \
                x[:, dy:dy + stride * out_h:stride, dx:dx + stride * out_w:stride, :]
            idx += 1
    return cols.reshape(n * out_h * out_w, kh * kw * c)


class Conv2D(Layer):
    """Cross-correlation over (N, H, W, Cin) with weights (Cout, Cin, kh, kw).

    The optimized path lowers patches to a matrix and multiplies; tests
    hold it to a direct sliding-window evaluation.
    """

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.weights: np.ndarray | None = None
        self.bias: np.ndarray | None = None
        self.grad_weights: np.ndarray | None = None
        self.grad_bias: np.ndarray | None = None
        self.cache = None
        self._in_shape: tuple[int, int, int] | None = None

    def initialize(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise DimensionError(f"conv2d expects (H, W, C) input, got {in_shape}")
        h, w, cin = in_shape
        kh, kw = self.spec.kernel
        cout = self.spec.out_channels
        fan_in = cin * kh * kw
        if rng is None:
            self.weights = np.zeros((cout, cin, kh, kw), dtype=dtype)
        else:
            self.weights = _he_uniform(rng, (cout, cin, kh, kw), fan_in, dtype)
        self.bias = np.zeros(cout, dtype=dtype)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        out_h, out_w, _ = _conv_geometry(h, w, self.spec.kernel, self.spec.stride,
                                         self.spec.padding)
        self._in_shape = tuple(in_shape)
        return (out_h, out_w, cout)

    def _weights_as_cols(self) -> np.ndarray:
        # (Cout, Cin, kh, kw) -> (kh*kw*Cin, Cout), matching im2col row order
        return self.weights.transpose(2, 3, 1, 0).reshape(-1, self.spec.out_channels)

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[3] != self.weights.shape[1]:
            raise DimensionError(
                f"conv2d expects (N, H, W, {self.weights.shape[1]}) input, got shape {x.shape}"
            )
        n, h, w, _ = x.shape
        stride = self.spec.stride
        out_h, out_w, (pt, pb, pl, pr) = _conv_geometry(
            h, w, self.spec.kernel, stride, self.spec.padding)
        if pt or pb or pl or pr:
            x_padded = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        else:
            x_padded = x
        cols = _im2col(x_padded, self.spec.kernel, stride, out_h, out_w)
        out = cols @ self._weights_as_cols() + self.bias
        if training:
            self.cache = (cols, x.shape, x_padded.shape, (pt, pb, pl, pr), (out_h, out_w))
        return out.reshape(n, out_h, out_w, self.spec.out_channels)

    def backward(self, grad):
        cols, x_shape, padded_shape, (pt, pb, pl, pr), (out_h, out_w) = self._take_cache()
        n = x_shape[0]
        cout = self.spec.out_channels
        kh, kw = self.spec.kernel
        cin = self.weights.shape[1]
        stride = self.spec.stride

        grad_flat = grad.reshape(n * out_h * out_w, cout)
        self.grad_bias = grad_flat.sum(axis=0)
        grad_wcols = cols.T @ grad_flat  # (kh*kw*Cin, Cout)
        self.grad_weights = grad_wcols.reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1)

        grad_cols = grad_flat @ self._weights_as_cols().T
        grad_cols = grad_cols.reshape(n, out_h, out_w, kh * kw * cin)
        grad_padded = np.zeros(padded_shape, dtype=grad.dtype)
        idx = 0
        for dy in range(kh):
            for dx in range(kw):
                grad_padded[:, dy:dy + stride * out_h:stride,
                            dx:dx + stride * out_w:stride, :] += \
                    grad_cols[..., idx * cin:(idx + 1) * cin]
                idx += 1
        h, w = x_shape[1], x_shape[2]
        return grad_padded[:, pt:pt + h, pl:pl + w, :]

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]


class MaxPool2D(Layer):
    """Per-window maximum with cached argmax; ties go to the first element
    in row-major window order so backward routing is deterministic."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        if len(in_shape) != 3:
            raise DimensionError(f"maxpool2d expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        wh, ww = self.spec.window
        if wh > h or ww > w:
            raise DimensionError(f"pool window {self.spec.window} larger than input {(h, w)}")
        s = self.spec.stride
        return ((h - wh) // s + 1, (w - ww) // s + 1, c)

    def forward(self, x, training=False):
        n, h, w, c = x.shape
        wh, ww = self.spec.window
        s = self.spec.stride
        if wh > h or ww > w:
            raise DimensionError(f"pool window {self.spec.window} larger than input {(h, w)}")
        out_h = (h - wh) // s + 1
        out_w = (w - ww) // s + 1
        patches = np.empty((n, out_h, out_w, wh * ww, c), dtype=x.dtype)
        for p in range(wh * ww):
            dy, dx = divmod(p, ww)
            patches[:, :, :, p, :] = x[:, dy:dy + s * out_h:s, dx:dx + s * out_w:s, :]
        argmax = patches.argmax(axis=3)  # first max in row-major window scan
        out = np.take_along_axis(patches, argmax[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        if training:
            self.cache = (argmax, x.shape, (out_h, out_w))
        return out

    def backward(self, grad):
        argmax, x_shape, (out_h, out_w) = self._take_cache()
        wh, ww = self.spec.window
        s = self.spec.stride
        grad_in = np.zeros(x_shape, dtype=grad.dtype)
        n_idx, i_idx, j_idx, c_idx = np.indices(argmax.shape, sparse=False)
        rows = i_idx * s + argmax // ww
        cols = j_idx * s + argmax % ww
        # overlapping windows accumulate at shared argmax positions
        np.add.at(grad_in, (n_idx, rows, cols, c_idx), grad)
        return grad_in


class Dense(Layer):
    """Affine map (N, in) -> (N, out): x W + b, weights shaped (in, out)."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.weights: np.ndarray | None = None
        self.bias: np.ndarray | None = None
        self.grad_weights: np.ndarray | None = None
        self.grad_bias: np.ndarray | None = None
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        if len(in_shape) != 1:
            raise DimensionError(
                f"dense expects flat (features,) input, got {in_shape}; add a flatten layer"
            )
        fan_in = in_shape[0]
        out = self.spec.out_features
        if rng is None:
            self.weights = np.zeros((fan_in, out), dtype=dtype)
        else:
            self.weights = _he_uniform(rng, (fan_in, out), fan_in, dtype)
        self.bias = np.zeros(out, dtype=dtype)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        return (out,)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.weights.shape[0]:
            raise DimensionError(
                f"dense expects (N, {self.weights.shape[0]}) input, got shape {x.shape}"
            )
        if training:
            self.cache = x
        return x @ self.weights + self.bias

    def backward(self, grad):
        x = self._take_cache()
        self.grad_weights = x.T @ grad
        self.grad_bias = grad.sum(axis=0)
        return grad @ self.weights.T

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.grad_weights, self.grad_bias]


class Dropout(Layer):
    """Inverted dropout: keep with probability 1-rate and scale survivors
    by 1/(1-rate) during training; inference is the bit-exact identity."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.rng: Rng | None = None
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        self.rng = rng
        return tuple(in_shape)

    def forward(self, x, training=False):
        if not training:
            return x
        rate = self.spec.rate
        if rate == 0.0:
            mask = np.ones_like(x)
        else:
            if self.rng is None:
                raise StateError("dropout layer used in training mode without an rng")
            keep = self.rng.random(size=x.shape) >= rate
            mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
        self.cache = mask
        return x * mask

    def backward(self, grad):
        mask = self._take_cache()
        return grad * mask


class Flatten(Layer):
    """Row-major reshape (N, ...) -> (N, product); data is untouched."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        return (int(np.prod(in_shape)),)

    def forward(self, x, training=False):
        if training:
            self.cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        shape = self._take_cache()
        return grad.reshape(shape)


class ReLU(Layer):
    """max(0, x); the subgradient at exactly 0 is defined as 0."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        return tuple(in_shape)

    def forward(self, x, training=False):
        if training:
            self.cache = x > 0
        return np.maximum(x, 0)

    def backward(self, grad):
        mask = self._take_cache()
        return grad * mask


class Sigmoid(Layer):
    """Elementwise logistic activation, branch-stable for any magnitude."""

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.cache = None

    def initialize(self, in_shape, rng, dtype):
        return tuple(in_shape)

    def forward(self, x, training=False):
        out = stable_sigmoid(x)
        if training:
            self.cache = out
        return out

    def backward(self, grad):
        out = self._take_cache()
        return grad * out * (1.0 - out)


_LAYER_CLASSES = {
    "conv2d": Conv2D,
    "maxpool2d": MaxPool2D,
    "dense": Dense,
    "dropout": Dropout,
    "flatten": Flatten,
    "relu": ReLU,
    "sigmoid": Sigmoid,
}


def make_layer(spec: LayerSpec) -> Layer:
    if spec.kind not in _LAYER_CLASSES:
        raise ConfigError(f"unknown layer kind {spec.kind!r}")
    return _LAYER_CLASSES[spec.kind](spec)
