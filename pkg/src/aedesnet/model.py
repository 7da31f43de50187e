"""Model assembly: an ordered layer-spec list materialized into a network.

A ModelSpec is pure configuration (input shape + layer specs) and is what
gets serialized; build_model wires the runtime layers, checks shape
compatibility end to end, and draws each layer's initial weights from its
own seeded substream so adding a layer never shifts another layer's draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .layers import (
    Layer,
    LayerSpec,
    conv2d,
    dense,
    dropout,
    flatten,
    make_layer,
    maxpool2d,
    relu,
    sigmoid_spec,
)
from .rng import Rng
from .tensor import resolve_dtype

DEFAULT_INPUT_SHAPE = (180, 180, 3)


@dataclass(frozen=True)
class ModelSpec:
    """Input shape plus the ordered layer stack (output activation included)."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def hidden_layer_count(self) -> int:
        """Layers between the input and the output unit; the final dense and
        sigmoid together form the output layer, so both are excluded."""
        return len(self.layers) - 2


def reference16(input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE,
                conv_dropout: float = 0.2, dense_dropout: float = 0.5) -> ModelSpec:
    """The standard 16-hidden-layer stack: four conv/ReLU blocks (three
    pooled), dropout around a 128-unit dense head, sigmoid output."""
    specs = (
        conv2d(16, 3, padding="same"), relu(), maxpool2d(2),
        conv2d(32, 3, padding="same"), relu(), maxpool2d(2),
        conv2d(64, 3, padding="same"), relu(), maxpool2d(2),
        conv2d(128, 3, padding="same"), relu(),
        dropout(conv_dropout),
        flatten(),
        dense(128), relu(),
        dropout(dense_dropout),
        dense(1),
        sigmoid_spec(),
    )
    return ModelSpec(input_shape=tuple(input_shape), layers=specs)


def _validate_spec(spec: ModelSpec) -> None:
    if len(spec.input_shape) != 3:
        raise ConfigError(f"input_shape must be (H, W, C), got {spec.input_shape}")
    if any(d < 1 for d in spec.input_shape):
        raise ConfigError(f"input_shape dimensions must be positive, got {spec.input_shape}")
    if len(spec.layers) < 2:
        raise ConfigError("a model needs at least a dense output layer and a sigmoid")
    if spec.layers[-1].kind != "sigmoid":
        raise ConfigError(f"output activation must be sigmoid, got {spec.layers[-1].kind!r}")
    if spec.layers[-2].kind != "dense" or spec.layers[-2].out_features != 1:
        raise ConfigError("binary classifier needs a single-unit dense layer before the sigmoid")


class Model:
    """Materialized network: runs batches forward and gradients backward."""

    def __init__(self, spec: ModelSpec, layers: list[Layer], dtype,
                 out_shapes: list[tuple[int, ...]]):
        self.spec = spec
        self.layers = layers
        self.dtype = dtype
        self.out_shapes = out_shapes

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 4 or tuple(x.shape[1:]) != self.spec.input_shape:
            raise DimensionError(
                f"model expects (N, {', '.join(map(str, self.spec.input_shape))}) "
                f"input, got shape {tuple(x.shape)}"
            )
        out = np.ascontiguousarray(x, dtype=self.dtype)
        for layer in self.layers:
            out = layer.forward(out, training=training)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def grads(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend(layer.grads())
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode scores in [0, 1], shape (N,)."""
        return self.forward(x, training=False).reshape(-1)

    def astype(self, dtype) -> "Model":
        """Same weights viewed at another precision (use float64 for
        gradient checking); returns a rebuilt model, self is untouched."""
        dtype = np.dtype(dtype)
        clone = build_model(self.spec, rng=None, dtype=dtype)
        for mine, theirs in zip(self.params(), clone.params()):
            theirs[...] = mine.astype(dtype)
        return clone


def build_model(spec: ModelSpec, rng: Rng | None, dtype="float32") -> Model:
    """Instantiate and shape-check every layer.  rng=None zero-initializes
    (loading serialized weights overwrites them anyway)."""
    _validate_spec(spec)
    dtype = resolve_dtype(dtype) if isinstance(dtype, str) else np.dtype(dtype)
    layers: list[Layer] = []
    out_shapes: list[tuple[int, ...]] = []
    shape: tuple[int, ...] = tuple(spec.input_shape)
    for idx, layer_spec in enumerate(spec.layers):
        layer = make_layer(layer_spec)
        layer_rng = rng.substream(layer_spec.kind, idx) if rng is not None else None
        try:
            shape = layer.initialize(shape, layer_rng, dtype)
        except DimensionError as exc:
            raise DimensionError(f"layer {idx} ({layer_spec.kind}): {exc}") from exc
        layers.append(layer)
        out_shapes.append(shape)
    if shape != (1,):
        raise ConfigError(f"network must end with a single unit, got output shape {shape}")
    return Model(spec, layers, dtype, out_shapes)


def _describe(spec: LayerSpec) -> str:
    if spec.kind == "conv2d":
        kh, kw = spec.kernel
        return f"conv2d {spec.out_channels}x{kh}x{kw} {spec.padding}"
    if spec.kind == "maxpool2d":
        wh, ww = spec.window
        return f"maxpool2d {wh}x{ww}"
    if spec.kind == "dense":
        return f"dense {spec.out_features}"
    if spec.kind == "dropout":
        return f"dropout {spec.rate:g}"
    return spec.kind


def model_summary(spec: ModelSpec) -> str:
    """Human-readable table: layer, output shape, parameter count."""
    model = build_model(spec, rng=None, dtype="float32")
    rows = [("layer", "output shape", "params")]
    rows.append(("input", str(tuple(spec.input_shape)), "0"))
    total = 0
    for layer, shape in zip(model.layers, model.out_shapes):
        count = layer.param_count()
        total += count
        rows.append((_describe(layer.spec), str(shape), str(count)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(3)))
    lines.append(f"total params: {total}")
    return "\n".join(lines)
