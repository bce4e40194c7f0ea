"""Dataset ingestion and probability-mass-function preparation.

Loads MNIST (IDX files), CIFAR-10 (binary batches), or generated white
noise into a uniform in-memory layout: one vectorized image per row, pixels
in [0, 1]. Also turns arbitrary image vectors into the smoothed pmfs the
relative-entropy computation consumes.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixels

PMF_SMOOTHING = 1e-8


class DataFormatError(ValueError):
    """A dataset file violates its binary format."""


@dataclass
class Dataset:
    """Vectorized image dataset: rows of pixels in [0, 1] plus labels."""

    images: np.ndarray
    labels: np.ndarray
    name: str
    image_shape: tuple[int, int, int]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        h, w, c = self.image_shape
        if self.images.ndim != 2 or self.images.shape[1] != h * w * c:
            raise ValueError(
                f"images must be (B, {h * w * c}) for shape {self.image_shape}"
            )
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("one label per image required")
        if self.images.size and (
            self.images.min() < 0.0 or self.images.max() > 1.0
        ):
            raise ValueError("pixels must lie in [0, 1]")

    @property
    def n_images(self) -> int:
        return self.images.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.images.shape[1]


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":  # transparently accept gzipped IDX files
        raw = gzip.decompress(raw)
    return raw


def _be32(raw: bytes, offset: int, path, what: str) -> int:
    if len(raw) < offset + 4:
        raise DataFormatError(f"truncated file {path}: missing {what}")
    return int.from_bytes(raw[offset : offset + 4], "big")


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an MNIST-style IDX image/label file pair.

    Big-endian headers; magic 0x00000803 for images, 0x00000801 for labels.
    Pixel bytes are scaled from [0, 255] to [0, 1].
    """
    raw = _read_bytes(images_path)
    magic = _be32(raw, 0, images_path, "magic number")
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(
            f"bad magic number in {images_path}: 0x{magic:08x} "
            f"(expected 0x{IDX_IMAGES_MAGIC:08x})"
        )
    count = _be32(raw, 4, images_path, "image count")
    rows = _be32(raw, 8, images_path, "row count")
    cols = _be32(raw, 12, images_path, "column count")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise DataFormatError(
            f"truncated file {images_path}: {len(raw)} bytes, need {need}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    raw = _read_bytes(labels_path)
    magic = _be32(raw, 0, labels_path, "magic number")
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(
            f"bad magic number in {labels_path}: 0x{magic:08x} "
            f"(expected 0x{IDX_LABELS_MAGIC:08x})"
        )
    n_labels = _be32(raw, 4, labels_path, "label count")
    if len(raw) < 8 + n_labels:
        raise DataFormatError(f"truncated file {labels_path}")
    if n_labels != count:
        raise DataFormatError(
            f"count mismatch: {count} images vs {n_labels} labels"
        )
    labels = np.frombuffer(raw, dtype=np.uint8, count=n_labels, offset=8)
    return Dataset(images, labels, "mnist", (rows, cols, 1))


def load_cifar10(batch_paths) -> Dataset:
    """Load CIFAR-10 binary batches (3073-byte records: label + RGB planes)."""
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    images, labels = [], []
    for path in batch_paths:
        raw = _read_bytes(path)
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: length {len(raw)} is not a positive multiple of "
                f"{CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].copy())
        images.append(records[:, 1:].astype(np.float64) / 255.0)
    return Dataset(
        np.concatenate(images),
        np.concatenate(labels),
        "cifar10",
        (32, 32, 3),
    )


def white_noise(count: int, n_pixels: int, seed: int) -> Dataset:
    """I.i.d. Uniform[0,1] images; labels are all zero (unused)."""
    if count < 1 or n_pixels < 1:
        raise ValueError("count and n_pixels must be >= 1")
    rng = np.random.default_rng(seed)
    images = rng.random((count, n_pixels))
    side = int(round(np.sqrt(n_pixels)))
    shape = (side, side, 1) if side * side == n_pixels else (n_pixels, 1, 1)
    return Dataset(images, np.zeros(count, dtype=np.int64), "noise", shape)


@dataclass
class Pmf:
    """Nonnegative vector summing to one."""

    masses: np.ndarray

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.masses.ndim != 1:
            raise ValueError("pmf must be one-dimensional")
        if not np.isfinite(self.masses).all():
            raise ValueError("pmf entries must be finite")
        if (self.masses < 0).any():
            raise ValueError("pmf entries must be nonnegative")
        if abs(self.masses.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf must sum to 1, got {self.masses.sum()!r}")

    def __len__(self) -> int:
        return self.masses.shape[0]


def pmf_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise pmf normalization: clamp negatives, smooth, divide by sum.

    Decoders with a linear output can emit values outside [0, 1]; clamping
    below at zero plus additive smoothing keeps every mass positive so the
    KL terms stay finite.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if not np.isfinite(m).all():
        raise ValueError("cannot normalize non-finite values into a pmf")
    m = np.maximum(m, 0.0) + PMF_SMOOTHING
    return m / m.sum(axis=-1, keepdims=True)


def to_pmf(vector: np.ndarray) -> Pmf:
    """Normalize one vector into a smoothed Pmf (see pmf_rows)."""
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("to_pmf expects a one-dimensional vector")
    if not np.isfinite(v).all():
        raise ValueError("to_pmf requires finite input")
    return Pmf(pmf_rows(v))
