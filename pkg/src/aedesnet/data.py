"""Datasets: directory ingestion, splits, and the synthetic generator.

Real data follows the class-per-subdirectory convention
``<root>/<class_dir>/<images>`` with exactly two class directories; the
lexicographically first directory becomes class 0 (Ae. aegypti) and the
second class 1 (Ae. albopictus).  The synthetic generator produces two
texture families (oriented stripes vs. spotted blobs) that a small CNN
can tell apart but a plain brightness threshold cannot, for desk-scale
experiments that do not need the multi-gigabyte field corpus.
"""

from __future__ import annotations

import hashlib
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, DimensionError
from .preprocess import rescale, resize_bilinear
from .rng import Rng

CLASS_NAMES = ("Ae. aegypti", "Ae. albopictus")
DEFAULT_IMAGE_SIZE = (180, 180)
DEFAULT_SPLIT_RATIOS = (0.7, 0.2, 0.1)


@dataclass
class Sample:
    """One labeled image: pixels in [0, 1], label 0/1, provenance path."""

    image: np.ndarray  # (H, W, 3) in [0, 1]
    label: int
    source: str


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]


@dataclass
class Dataset:
    samples: list[Sample]
    split: SplitIndices
    class_names: tuple[str, str] = CLASS_NAMES

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, indices) -> list[Sample]:
        return [self.samples[i] for i in indices]

    def images(self, indices) -> np.ndarray:
        return np.stack([self.samples[i].image for i in indices])

    def labels(self, indices) -> np.ndarray:
        return np.asarray([self.samples[i].label for i in indices], dtype=np.int64)


@dataclass
class LoadReport:
    """Per-class tallies of decoded and skipped files."""

    class_dirs: list[str]
    loaded: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = []
        for idx, name in enumerate(self.class_dirs):
            out.append(
                f"class {idx} ({name} -> {CLASS_NAMES[idx]}): "
                f"loaded={self.loaded.get(name, 0)} skipped={self.skipped.get(name, 0)}"
            )
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def _all_train_split(n: int) -> SplitIndices:
    return SplitIndices(train=tuple(range(n)), val=(), test=())


def load_dataset(
    root: str | Path,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
    dtype=np.float32,
) -> tuple[Dataset, LoadReport]:
    """Ingest a class-per-subdirectory tree into a Dataset.

    Every decodable raster file becomes a Sample resized to
    (image_size, 3) and rescaled to [0, 1]; undecodable files are skipped
    with a warning and counted in the report.  Sample order is the sorted
    path order, so two loads of the same tree are identical.  The split
    starts out as all-train; use split_dataset to partition.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) < 2:
        raise DataError(
            f"dataset root {root} must contain 2 class subdirectories, "
            f"found {len(class_dirs)}"
        )
    if len(class_dirs) > 2:
        raise DataError(
            f"binary classifier expects exactly 2 class subdirectories, "
            f"found {len(class_dirs)}: {[d.name for d in class_dirs]}"
        )

    report = LoadReport(class_dirs=[d.name for d in class_dirs])
    samples: list[Sample] = []
    for label, class_dir in enumerate(class_dirs):
        loaded = skipped = 0
        for path in sorted(p for p in class_dir.iterdir() if p.is_file()):
            try:
                with Image.open(path) as img:
                    raw = np.asarray(img.convert("RGB"), dtype=np.uint8)
            except (UnidentifiedImageError, OSError, ValueError):
                warnings.warn(f"skipping undecodable file {path}", stacklevel=2)
                skipped += 1
                continue
            image = rescale(resize_bilinear(raw, image_size), dtype=dtype)
            samples.append(Sample(image=image, label=label, source=str(path)))
            loaded += 1
        report.loaded[class_dir.name] = loaded
        report.skipped[class_dir.name] = skipped
        if loaded == 0:
            raise DataError(f"class directory {class_dir} has no decodable images")

    return Dataset(samples=samples, split=_all_train_split(len(samples))), report


def split_dataset(
    dataset: Dataset,
    ratios: tuple[float, float, float],
    rng: Rng,
) -> Dataset:
    """Partition samples into train/val/test by a seeded shuffle.

    Ratios must be non-negative and sum to 1; counts are rounded, with the
    test split absorbing the remainder so the partition always covers
    every sample exactly once.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be 3 non-negative values summing to 1, got {ratios}")
    n = len(dataset.samples)
    perm = [int(i) for i in rng.permutation(n)]
    n_train = int(round(n * ratios[0]))
    n_val = min(int(round(n * ratios[1])), n - n_train)
    split = SplitIndices(
        train=tuple(perm[:n_train]),
        val=tuple(perm[n_train:n_train + n_val]),
        test=tuple(perm[n_train + n_val:]),
    )
    return Dataset(samples=dataset.samples, split=split, class_names=dataset.class_names)


def _standardized(pattern: np.ndarray, stream: Rng) -> np.ndarray:
    """Center a pattern at 0.5 with a class-agnostic brightness jitter.

    The pattern is scaled so its extremes sit within [0.08, 0.92] before a
    shared-distribution jitter is added, which keeps every pixel in (0, 1)
    without clipping and leaves the image mean carrying no class signal.
    """
    pattern = pattern - pattern.mean()
    peak = np.max(np.abs(pattern))
    if peak > 0:
        pattern = pattern * (0.42 / peak)
    jitter = stream.uniform(-0.05, 0.05)
    return 0.5 + pattern + jitter


def _stripes(h: int, w: int, stream: Rng) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    freq = stream.uniform(0.08, 0.2)
    theta = stream.uniform(0.0, np.pi)
    phase = stream.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2.0 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    noise = stream.normal(0.0, 0.25, size=(h, w))
    return wave + noise


def _blobs(h: int, w: int, stream: Rng) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    pattern = np.zeros((h, w))
    n_spots = int(stream.integers(6, 13))
    for k in range(n_spots):
        cy = stream.uniform(0.0, h)
        cx = stream.uniform(0.0, w)
        radius = stream.uniform(max(1.5, h / 24.0), max(2.5, h / 9.0))
        sign = 1.0 if k % 2 == 0 else -1.0
        pattern += sign * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius**2))
    noise = stream.normal(0.0, 0.15, size=(h, w))
    return pattern + noise


def generate_synthetic_dataset(
    n_per_class: int,
    image_size: tuple[int, int] = (64, 64),
    rng: Rng | None = None,
) -> Dataset:
    """Two procedurally distinct texture classes, deterministic per seed.

    Class 0 is oriented stripe patterns, class 1 spotted blobs, both with
    matched brightness statistics so only spatial structure separates
    them.  Images are (H, W, 3) float32 in [0, 1].
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if rng is None:
        rng = Rng(0)
    h, w = int(image_size[0]), int(image_size[1])
    if h < 1 or w < 1:
        raise DimensionError(f"image size must be positive, got {image_size}")

    samples: list[Sample] = []
    for label, texture in ((0, _stripes), (1, _blobs)):
        for i in range(n_per_class):
            stream = rng.substream("synthetic", label, i)
            base = _standardized(texture(h, w, stream), stream)
            gains = 1.0 + stream.uniform(-0.06, 0.06, size=3)
            image = 0.5 + (base[:, :, None] - 0.5) * gains[None, None, :]
            samples.append(
                Sample(image=image.astype(np.float32), label=label, source="synthetic")
            )
    return Dataset(samples=samples, split=_all_train_split(len(samples)))


SYNTH_CLASS_DIRS = ("aegypti", "albopictus")


def write_dataset_pngs(dataset: Dataset, out_root: str | Path) -> dict[str, int]:
    """Write samples as 8-bit PNGs in the class-per-subdirectory layout."""
    out_root = Path(out_root)
    counts: dict[str, int] = {}
    for name in SYNTH_CLASS_DIRS:
        (out_root / name).mkdir(parents=True, exist_ok=True)
        counts[name] = 0
    for i, sample in enumerate(dataset.samples):
        name = SYNTH_CLASS_DIRS[sample.label]
        pixels = np.clip(np.rint(sample.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(pixels).save(out_root / name / f"{name}_{i:05d}.png")
        counts[name] += 1
    return counts


def directory_fingerprint(root: str | Path) -> tuple[int, str]:
    """(file count, sha256 over the sorted relative path + size listing)."""
    root = Path(root)
    digest = hashlib.sha256()
    count = 0
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(f"{path.relative_to(root)}\t{path.stat().st_size}\n".encode())
        count += 1
    return count, digest.hexdigest()
