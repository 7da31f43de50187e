"""Image preprocessing: rescaling, resizing, normalization, ZCA whitening.

The inference-time chain is decode -> resize -> rescale to [0,1] ->
per-channel normalize -> optional ZCA whitening, and the statistics for
the last two stages are fitted on the training split only, then persisted
inside the model artifact so that inference replays the exact transform
seen during training.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, DimensionError, NumericError

RESCALE_FACTOR = 1.0 / 255.0
ZCA_DEFAULT_EPSILON = 1e-6
ZCA_DEFAULT_DIM_CAP = 4096


def rescale(image: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Map pixel values from [0, 255] to [0, 1] by dividing by 255."""
    image = np.asarray(image)
    if image.size and (image.min() < 0 or image.max() > 255):
        raise ContractError(
            f"rescale expects values in [0, 255], got range "
            f"[{image.min()}, {image.max()}]"
        )
    dtype = np.dtype(dtype)
    # true division by the exactly-representable 255 keeps the (x*255, /255)
    # round trip within 1 ulp; multiplying by a rounded 1/255 would not
    return image.astype(dtype) / dtype.type(255.0)


def resize_bilinear(image: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Resize (H, W, C) to (H', W', C) by bilinear interpolation.

    Pixel centers sit at half-integers (the align-corners=False
    convention), sampling coordinates are clamped at the borders, and
    channels are resampled independently.  Integer inputs come back as
    float32; float inputs keep their dtype.  Resizing to the original
    size is exact.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise DimensionError(f"resize_bilinear expects (H, W, C), got shape {image.shape}")
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise DimensionError(f"target size must be positive, got {(th, tw)}")
    h, w, _ = image.shape
    if h < 1 or w < 1:
        raise DimensionError(f"source image must be non-empty, got shape {image.shape}")

    out_dtype = image.dtype if image.dtype.kind == "f" else np.dtype(np.float32)
    img = image.astype(np.float64, copy=False)

    ys = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = img[y0][:, x0] * (1.0 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1.0 - wx) + img[y1][:, x1] * wx
    out = top * (1.0 - wy) + bottom * wy
    # every output is a convex combination of inputs, so any value outside
    # the source range is pure roundoff; clamp it back
    np.clip(out, img.min(), img.max(), out=out)
    return out.astype(out_dtype)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and standard deviation fitted on the training split."""

    mean: np.ndarray
    std: np.ndarray


def fit_channel_stats(images: np.ndarray, dtype=np.float32) -> ChannelStats:
    """Fit per-channel mean/std over a stacked (N, H, W, C) batch.

    Channels with zero spread get a unit divisor so that normalization
    stays defined; a warning flags the degenerate channel.
    """
    images = np.asarray(images)
    if images.ndim != 4:
        raise DimensionError(f"expected (N, H, W, C) batch, got shape {images.shape}")
    mean = images.mean(axis=(0, 1, 2), dtype=np.float64)
    std = images.std(axis=(0, 1, 2), dtype=np.float64)
    zero = std == 0.0
    if zero.any():
        warnings.warn(
            f"channel(s) {np.nonzero(zero)[0].tolist()} are constant; "
            "using unit divisor for normalization",
            stacklevel=2,
        )
        std = np.where(zero, 1.0, std)
    return ChannelStats(mean=mean.astype(dtype), std=std.astype(dtype))


def normalize(batch: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Per-channel (x - mean) / std over the trailing channel axis."""
    batch = np.asarray(batch)
    c = batch.shape[-1]
    if stats.mean.shape != (c,) or stats.std.shape != (c,):
        raise DimensionError(
            f"stats fitted for {stats.mean.shape[0]} channels, batch has {c}"
        )
    return (batch - stats.mean.astype(batch.dtype)) / stats.std.astype(batch.dtype)


@dataclass(frozen=True)
class ZcaTransform:
    """Zero-phase whitening: x -> W (x - mean) with symmetric W.

    W = E diag(1/sqrt(lambda + eps)) E^T from the eigendecomposition of the
    training-data covariance, so the transform decorrelates features while
    staying as close as possible to the original pixel space.
    """

    mean: np.ndarray
    matrix: np.ndarray
    epsilon: float

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def astype(self, dtype) -> "ZcaTransform":
        return ZcaTransform(
            mean=self.mean.astype(dtype),
            matrix=self.matrix.astype(dtype),
            epsilon=self.epsilon,
        )


def zca_fit(samples: np.ndarray, epsilon: float = ZCA_DEFAULT_EPSILON) -> ZcaTransform:
    """Fit a ZCA whitening transform on (N, d) training vectors.

    The covariance is (1/N) X^T X of the centered data; eigenvalues are
    floored at zero before the epsilon regularizer is added.  Computation
    runs in float64 regardless of the input dtype.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"zca_fit expects (N, d) vectors, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise DataError(f"zca_fit needs at least 2 samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    try:
        eigvals, eigvecs = np.linalg.eigh(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    eigvals = np.maximum(eigvals, 0.0)
    scale = 1.0 / np.sqrt(eigvals + epsilon)
    w = (eigvecs * scale) @ eigvecs.T
    w = (w + w.T) / 2.0  # kill roundoff asymmetry; ZCA is symmetric by construction
    return ZcaTransform(mean=mean, matrix=w, epsilon=float(epsilon))


def zca_apply(transform: ZcaTransform, vectors: np.ndarray) -> np.ndarray:
    """Whiten a (d,) vector or an (N, d) batch: W (x - mean)."""
    x = np.asarray(vectors)
    d = transform.dim
    if x.shape[-1] != d:
        raise DimensionError(
            f"vector length {x.shape[-1]} does not match transform dimension {d}"
        )
    centered = x - transform.mean.astype(x.dtype)
    return centered @ transform.matrix.astype(x.dtype)


@dataclass(frozen=True)
class PreprocessStats:
    """Everything inference needs to replay the training-time preprocessing."""

    channels: ChannelStats
    zca: ZcaTransform | None = None


def identity_stats(n_channels: int = 3, dtype=np.float32) -> PreprocessStats:
    """Stats that leave a batch unchanged (zero mean, unit std, no ZCA)."""
    return PreprocessStats(
        channels=ChannelStats(
            mean=np.zeros(n_channels, dtype=dtype),
            std=np.ones(n_channels, dtype=dtype),
        )
    )


def apply_preprocess(batch: np.ndarray, stats: PreprocessStats) -> np.ndarray:
    """Normalize a [0,1] (N, H, W, C) batch and apply ZCA when fitted."""
    out = normalize(batch, stats.channels)
    if stats.zca is not None:
        shape = out.shape
        flat = out.reshape(shape[0], -1)
        out = zca_apply(stats.zca, flat).reshape(shape)
    return out
