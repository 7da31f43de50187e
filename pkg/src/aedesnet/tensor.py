"""Dense tensor conventions and primitives.

Every tensor in this package is a contiguous row-major numpy array of
float32 (the training/inference default) or float64 (gradient-check mode,
where finite differences need the extra headroom).  Images are laid out
(height, width, channels); batched tensors prepend the batch axis.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionError

FLOAT32 = np.float32
FLOAT64 = np.float64

_DTYPE_NAMES = {
    "float32": np.float32,
    "float64": np.float64,
}


def resolve_dtype(precision: str | type | np.dtype) -> np.dtype:
    """Map a precision name ("float32"/"float64") or dtype to a numpy dtype."""
    if isinstance(precision, str):
        if precision not in _DTYPE_NAMES:
            raise ConfigError(f"unknown precision {precision!r}; expected 'float32' or 'float64'")
        return np.dtype(_DTYPE_NAMES[precision])
    dt = np.dtype(precision)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"unsupported tensor dtype {dt}; expected float32 or float64")
    return dt


def as_tensor(data, dtype=FLOAT32) -> np.ndarray:
    """Return `data` as a contiguous row-major array of the given dtype."""
    return np.ascontiguousarray(data, dtype=resolve_dtype(dtype))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors, accumulated in their dtype."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul expects two matrices, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply {a.shape} by {b.shape}: inner dimensions "
            f"{a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def map_unary(t: np.ndarray, f: Callable[[float], float]) -> np.ndarray:
    """Apply a scalar function elementwise; shape and dtype are preserved.

    Intended for correctness-critical scalar maps; the hot paths in the
    layers use vectorized numpy expressions directly.
    """
    t = np.asarray(t)
    out = np.array([f(x) for x in t.ravel()], dtype=t.dtype)
    return out.reshape(t.shape)


def flatten_index(shape: tuple[int, ...], index: tuple[int, ...]) -> int:
    """Row-major flat offset of a multi-index (last axis varies fastest)."""
    if len(index) != len(shape):
        raise DimensionError(f"index {index} has wrong rank for shape {shape}")
    return int(np.ravel_multi_index(index, shape))


def unflatten_index(shape: tuple[int, ...], flat: int) -> tuple[int, ...]:
    """Inverse of flatten_index: multi-index of a row-major flat offset."""
    return tuple(int(i) for i in np.unravel_index(flat, shape))
