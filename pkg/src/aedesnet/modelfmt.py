"""Binary model artifact: "MAED" container for weights plus the
preprocessing statistics inference needs.

Layout, all integers and floats little-endian:

    offset 0   magic b"MAED"
    offset 4   u32 format version (currently 1)
    offset 8   u32 metadata block length in bytes
    offset 12  u32 layer record count
    offset 16  metadata block:
                   u32 JSON length, UTF-8 JSON (sorted keys),
                   then, when the JSON declares a zca entry of dim d,
                   d f32 mean values followed by d*d f32 matrix values
    ...        layer records, each: u32 kind tag, kind-specific u32/f32
               hyperparameters, f32 weight then bias payloads
    end-4      u32 CRC-32 (zlib polynomial) over every preceding byte

Weights are stored float32 regardless of host; files written anywhere
load anywhere.  No timestamps: identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CLASS_NAMES
from .errors import ContractError, CorruptionError, FormatError, UnsupportedVersionError
from .layers import (
    Conv2D,
    Dense,
    LayerSpec,
    conv2d,
    dense,
    dropout,
    flatten,
    maxpool2d,
    relu,
    sigmoid_spec,
)
from .model import Model, ModelSpec, build_model
from .preprocess import ChannelStats, PreprocessStats, ZcaTransform

MAGIC = b"MAED"
FORMAT_VERSION = 1
HEADER_SIZE = 16

_KIND_TAGS = {
    "conv2d": 1,
    "maxpool2d": 2,
    "dense": 3,
    "dropout": 4,
    "flatten": 5,
    "relu": 6,
    "sigmoid": 7,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_PAD_CODES = {"valid": 0, "same": 1}
_CODE_PADS = {v: k for k, v in _PAD_CODES.items()}


@dataclass(frozen=True)
class ModelMeta:
    """Everything about a trained model that is not a weight."""

    class_names: tuple[str, str] = CLASS_NAMES
    input_shape: tuple[int, int, int] = (180, 180, 3)
    threshold: float = 0.5
    model_version: str = "1"
    seed: int = 0


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _Writer:
    def __init__(self):
        self.chunks: list[bytes] = []

    def u32(self, value: int) -> None:
        self.chunks.append(struct.pack("<I", value))

    def f32(self, value: float) -> None:
        self.chunks.append(struct.pack("<f", value))

    def raw(self, data: bytes) -> None:
        self.chunks.append(data)

    def join(self) -> bytes:
        return b"".join(self.chunks)


def _layer_record(layer) -> bytes:
    spec = layer.spec
    w = _Writer()
    w.u32(_KIND_TAGS[spec.kind])
    if spec.kind == "conv2d":
        cout, cin, kh, kw = layer.weights.shape
        w.u32(cout)
        w.u32(cin)
        w.u32(kh)
        w.u32(kw)
        w.u32(spec.stride)
        w.u32(_PAD_CODES[spec.padding])
        w.raw(_f32_bytes(layer.weights))
        w.raw(_f32_bytes(layer.bias))
    elif spec.kind == "maxpool2d":
        w.u32(spec.window[0])
        w.u32(spec.window[1])
        w.u32(spec.stride)
    elif spec.kind == "dense":
        fan_in, out = layer.weights.shape
        w.u32(fan_in)
        w.u32(out)
        w.raw(_f32_bytes(layer.weights))
        w.raw(_f32_bytes(layer.bias))
    elif spec.kind == "dropout":
        w.f32(spec.rate)
    # flatten / relu / sigmoid carry no extra data
    return w.join()


def _metadata_block(stats: PreprocessStats, meta: ModelMeta) -> bytes:
    doc = {
        "class_names": list(meta.class_names),
        "input_shape": list(meta.input_shape),
        "threshold": meta.threshold,
        "model_version": meta.model_version,
        "seed": meta.seed,
        "channel_mean": [float(v) for v in stats.channels.mean],
        "channel_std": [float(v) for v in stats.channels.std],
        "zca": None,
    }
    zca_payload = b""
    if stats.zca is not None:
        if stats.zca.mean.dtype != np.float32:
            raise ContractError(
                f"whitening stats must be float32 for serialization, got {stats.zca.mean.dtype}"
            )
        doc["zca"] = {"dim": stats.zca.dim, "epsilon": stats.zca.epsilon}
        zca_payload = _f32_bytes(stats.zca.mean) + _f32_bytes(stats.zca.matrix)
    encoded = json.dumps(doc, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded + zca_payload


def save_model(model: Model, stats: PreprocessStats, path,
               meta: ModelMeta | None = None) -> int:
    """Write the artifact; returns the byte count written."""
    if model.dtype != np.float32:
        raise ContractError(
            f"only float32 models serialize (payloads are 32-bit); got {model.dtype}. "
            "Convert with model.astype('float32') first."
        )
    if meta is None:
        meta = ModelMeta(input_shape=model.spec.input_shape)
    if tuple(meta.input_shape) != tuple(model.spec.input_shape):
        raise ContractError(
            f"metadata input_shape {meta.input_shape} does not match "
            f"model input_shape {model.spec.input_shape}"
        )
    metadata = _metadata_block(stats, meta)
    records = [_layer_record(layer) for layer in model.layers]
    body = _Writer()
    body.raw(MAGIC)
    body.u32(FORMAT_VERSION)
    body.u32(len(metadata))
    body.u32(len(records))
    body.raw(metadata)
    for record in records:
        body.raw(record)
    payload = body.join()
    blob = payload + struct.pack("<I", zlib.crc32(payload))
    Path(path).write_bytes(blob)
    return len(blob)


class _Reader:
    """Cursor over the file bytes; running past the end raises a
    corruption error that names the absolute byte offset."""

    def __init__(self, data: bytes, start: int = 0):
        self.data = data
        self.pos = start

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise CorruptionError(
                f"file truncated: {what} needs bytes {self.pos}..{end} "
                f"but the file ends at byte {len(self.data)}"
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def f32_array(self, count: int, shape: tuple[int, ...], what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def _read_layer(reader: _Reader, index: int):
    """Returns (LayerSpec, weights-or-None, bias-or-None)."""
    tag = reader.u32(f"layer {index} kind tag")
    kind = _TAG_KINDS.get(tag)
    if kind is None:
        raise CorruptionError(f"layer {index}: unknown kind tag {tag}")
    if kind == "conv2d":
        cout = reader.u32(f"layer {index} out_channels")
        cin = reader.u32(f"layer {index} in_channels")
        kh = reader.u32(f"layer {index} kernel height")
        kw = reader.u32(f"layer {index} kernel width")
        stride = reader.u32(f"layer {index} stride")
        pad_code = reader.u32(f"layer {index} padding code")
        if pad_code not in _CODE_PADS:
            raise CorruptionError(f"layer {index}: unknown padding code {pad_code}")
        weights = reader.f32_array(cout * cin * kh * kw, (cout, cin, kh, kw),
                                   f"layer {index} conv weights")
        bias = reader.f32_array(cout, (cout,), f"layer {index} conv bias")
        return conv2d(cout, (kh, kw), stride=stride, padding=_CODE_PADS[pad_code]), weights, bias
    if kind == "maxpool2d":
        wh = reader.u32(f"layer {index} window height")
        ww = reader.u32(f"layer {index} window width")
        stride = reader.u32(f"layer {index} stride")
        return maxpool2d((wh, ww), stride=stride), None, None
    if kind == "dense":
        fan_in = reader.u32(f"layer {index} in_features")
        out = reader.u32(f"layer {index} out_features")
        weights = reader.f32_array(fan_in * out, (fan_in, out), f"layer {index} dense weights")
        bias = reader.f32_array(out, (out,), f"layer {index} dense bias")
        return dense(out), weights, bias
    if kind == "dropout":
        return dropout(reader.f32(f"layer {index} dropout rate")), None, None
    if kind == "flatten":
        return flatten(), None, None
    if kind == "relu":
        return relu(), None, None
    return sigmoid_spec(), None, None


def _parse(data: bytes):
    if len(data) < HEADER_SIZE + 4:
        raise CorruptionError(
            f"file truncated: {len(data)} bytes is smaller than the "
            f"{HEADER_SIZE + 4}-byte minimum"
        )
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format version {version} not supported (reader handles {FORMAT_VERSION})"
        )
    meta_len, layer_count = struct.unpack("<II", data[8:16])

    reader = _Reader(data, HEADER_SIZE)
    meta_end = HEADER_SIZE + meta_len
    if meta_end + 4 > len(data):
        raise CorruptionError(
            f"file truncated: metadata block needs bytes {HEADER_SIZE}..{meta_end} "
            f"but the file ends at byte {len(data)}"
        )
    json_len = reader.u32("metadata JSON length")
    raw_json = reader.take(json_len, "metadata JSON")
    try:
        doc = json.loads(raw_json.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"metadata JSON undecodable: {exc}") from exc

    zca = None
    if doc.get("zca") is not None:
        d = int(doc["zca"]["dim"])
        zca_mean = reader.f32_array(d, (d,), "zca mean")
        zca_matrix = reader.f32_array(d * d, (d, d), "zca matrix")
        zca = ZcaTransform(mean=zca_mean, matrix=zca_matrix,
                           epsilon=float(doc["zca"]["epsilon"]))
    if reader.pos != meta_end:
        raise CorruptionError(
            f"metadata block length {meta_len} inconsistent: parsing ended "
            f"at byte {reader.pos}, expected {meta_end}"
        )

    layers = []
    for i in range(layer_count):
        layers.append(_read_layer(reader, i))
    if reader.pos != len(data) - 4:
        raise CorruptionError(
            f"trailing bytes: layer records end at byte {reader.pos} "
            f"but the checksum starts at byte {len(data) - 4}"
        )

    stored_crc = struct.unpack("<I", data[-4:])[0]
    computed_crc = zlib.crc32(data[:-4])
    return doc, zca, layers, stored_crc, computed_crc


def load_model(path) -> tuple[Model, PreprocessStats, ModelMeta]:
    """Read, integrity-check, and rebuild; forward outputs match the
    saved model bit for bit."""
    data = Path(path).read_bytes()
    doc, zca, layer_triples, stored_crc, computed_crc = _parse(data)
    if stored_crc != computed_crc:
        raise CorruptionError(
            f"checksum mismatch: stored 0x{stored_crc:08x}, computed 0x{computed_crc:08x}"
        )

    meta = ModelMeta(
        class_names=tuple(doc["class_names"]),
        input_shape=tuple(doc["input_shape"]),
        threshold=float(doc["threshold"]),
        model_version=str(doc["model_version"]),
        seed=int(doc["seed"]),
    )
    channels = ChannelStats(
        mean=np.array(doc["channel_mean"], dtype=np.float32),
        std=np.array(doc["channel_std"], dtype=np.float32),
    )
    stats = PreprocessStats(channels=channels, zca=zca)

    spec = ModelSpec(input_shape=meta.input_shape,
                     layers=tuple(t[0] for t in layer_triples))
    model = build_model(spec, rng=None, dtype="float32")
    for layer, (_, weights, bias) in zip(model.layers, layer_triples):
        if weights is None:
            continue
        if not isinstance(layer, (Conv2D, Dense)):
            raise CorruptionError(f"weight payload attached to a {layer.spec.kind} layer")
        if layer.weights.shape != weights.shape:
            raise CorruptionError(
                f"stored weights shaped {weights.shape} do not chain: "
                f"expected {layer.weights.shape}"
            )
        layer.weights[...] = weights
        layer.bias[...] = bias
    return model, stats, meta


def _describe_record(spec: LayerSpec) -> str:
    if spec.kind == "conv2d":
        return (f"conv2d out={spec.out_channels} kernel={spec.kernel[0]}x{spec.kernel[1]} "
                f"stride={spec.stride} padding={spec.padding}")
    if spec.kind == "maxpool2d":
        return f"maxpool2d window={spec.window[0]}x{spec.window[1]} stride={spec.stride}"
    if spec.kind == "dense":
        return f"dense out={spec.out_features}"
    if spec.kind == "dropout":
        return f"dropout rate={spec.rate:g}"
    return spec.kind


def dump(path) -> str:
    """Debug view: header fields, layer table, checksum status."""
    data = Path(path).read_bytes()
    doc, zca, layer_triples, stored_crc, computed_crc = _parse(data)
    lines = [
        f"magic: {MAGIC.decode('ascii')}",
        f"version: {FORMAT_VERSION}",
        f"size: {len(data)} bytes",
        f"class_names: {', '.join(doc['class_names'])}",
        f"input_shape: {tuple(doc['input_shape'])}",
        f"threshold: {doc['threshold']}",
        f"model_version: {doc['model_version']}",
        f"seed: {doc['seed']}",
        f"zca: dim={zca.dim} epsilon={zca.epsilon:g}" if zca is not None else "zca: none",
        f"layers: {len(layer_triples)}",
    ]
    for i, (spec, weights, bias) in enumerate(layer_triples):
        n_params = (weights.size + bias.size) if weights is not None else 0
        lines.append(f"  [{i}] {_describe_record(spec)} params={n_params}")
    status = "ok" if stored_crc == computed_crc else (
        f"MISMATCH (stored 0x{stored_crc:08x}, computed 0x{computed_crc:08x})"
    )
    lines.append(f"crc32: 0x{stored_crc:08x} {status}")
    return "\n".join(lines)
