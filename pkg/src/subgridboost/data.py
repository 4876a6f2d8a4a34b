"""Dataset ingestion and generation.

Binary formats are parsed bit-exactly and every loader has a writer
counterpart.  Labels are 1-based internally; loaders convert from the
on-disk 0-based encodings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError

CIFAR_RECORD = 3073  # 1 label byte + 3 * 32 * 32 pixel bytes
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledBatch:
    inputs: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64, 1..M
    n_classes: int
    normalized: bool = False

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 4:
            raise ValueError(f"inputs must be NCHW, got shape {self.inputs.shape}")
        if len(self.labels) != len(self.inputs):
            raise ValueError("inputs/labels length mismatch")
        if len(self.labels) and (self.labels.min() < 1 or self.labels.max() > self.n_classes):
            raise ValueError(f"labels outside 1..{self.n_classes}")

    def __len__(self):
        return len(self.labels)

    @property
    def geometry(self):
        return self.inputs.shape[1:]


@dataclass
class DatasetMeta:
    name: str
    n_train: int
    n_test: int
    geometry: tuple
    n_classes: int
    mean: np.ndarray = field(default=None)  # per-channel, training split only
    std: np.ndarray = field(default=None)


def load_cifar10_binary(path):
    """Parse CIFAR-10 binary records: label byte then 3072 channel-major
    R,G,B pixel bytes (32x32 row-major), scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD != 0:
        raise ValueError(f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise ValueError(f"{path}: label byte {labels.max()} > 9")
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return LabeledBatch(pixels, labels + 1, n_classes=10)


def write_cifar10_binary(path, batch):
    """Writer counterpart of :func:`load_cifar10_binary` (values are
    quantized back to bytes, so loader outputs round-trip bit-exactly)."""
    pixels = np.round(batch.inputs * 255.0).astype(np.uint8).reshape(len(batch), -1)
    labels = (batch.labels - 1).astype(np.uint8)[:, None]
    with open(path, "wb") as fh:
        fh.write(np.hstack([labels, pixels]).tobytes())


def load_idx(images_path, labels_path):
    """Parse a big-endian IDX image/label file pair (grayscale, C=1)."""
    with open(images_path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise ValueError(f"{images_path}: truncated header")
        magic, count, height, width = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad magic 0x{magic:08X}")
        body = fh.read()
    expected = count * height * width
    if len(body) != expected:
        raise ValueError(f"{images_path}: expected {expected} pixel bytes, got {len(body)}")
    images = np.frombuffer(body, dtype=np.uint8).reshape(count, 1, height, width)

    with open(labels_path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise ValueError(f"{labels_path}: truncated header")
        magic, label_count = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad magic 0x{magic:08X}")
        labels = np.frombuffer(fh.read(), dtype=np.uint8)
    if label_count != count or len(labels) != count:
        raise ValueError(f"image count {count} != label count {label_count}")
    n_classes = int(labels.max()) + 1 if count else 1
    return LabeledBatch(images.astype(np.float64) / 255.0, labels.astype(np.int64) + 1, n_classes)


def write_idx(images_path, labels_path, batch):
    """Writer counterpart of :func:`load_idx`."""
    n, c, h, w = batch.inputs.shape
    if c != 1:
        raise ValueError("IDX writer expects single-channel data")
    pixels = np.round(batch.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write((batch.labels - 1).astype(np.uint8).tobytes())


def make_synthetic(seed, n, geometry, n_classes, difficulty):
    """Class-conditional localized blob patterns plus seeded noise.

    Each class owns a Gaussian bump center inside a compact signal region
    (upper-left block of the image), so the class-discriminative pixels are
    spatially concentrated.  ``difficulty`` scales additive noise and
    enables +-1 pixel center jitter; at 0 the per-class patterns are exact.
    """
    c, h, w = geometry
    if n < n_classes:
        raise ValueError("need at least one sample per class")
    if h < 8 or w < 8:
        raise ValueError(f"geometry {h}x{w} too small for blob placement")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B]))

    # class centers on a ring inside the upper-left signal block
    block_h, block_w = h // 2, w // 2
    mid_r, mid_c = block_h / 2.0, block_w / 2.0
    radius = max(1.5, min(block_h, block_w) / 2.0 - 1.5)
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    centers = np.stack(
        [mid_r + radius * np.sin(angles) * 0.9, mid_c + radius * np.cos(angles) * 0.9], axis=1
    )
    channel_amp = 0.5 + rng.random((n_classes, c))

    labels = np.arange(n, dtype=np.int64) % n_classes + 1
    labels = rng.permutation(labels)

    sigma = max(1.0, min(h, w) / 10.0)
    rr = np.arange(h, dtype=np.float64)[:, None]
    cc = np.arange(w, dtype=np.float64)[None, :]
    jitter = rng.integers(-1, 2, size=(n, 2)) if difficulty > 0 else np.zeros((n, 2), np.int64)

    inputs = np.zeros((n, c, h, w), dtype=np.float64)
    for i in range(n):
        k = labels[i] - 1
        cr = centers[k, 0] + jitter[i, 0]
        ccol = centers[k, 1] + jitter[i, 1]
        bump = np.exp(-((rr - cr) ** 2 + (cc - ccol) ** 2) / (2.0 * sigma**2))
        inputs[i] = channel_amp[k][:, None, None] * bump[None, :, :]
    if difficulty > 0:
        inputs += rng.normal(0.0, 0.6 * difficulty, size=inputs.shape)

    batch = LabeledBatch(inputs, labels, n_classes)
    mean, std = compute_normalization(batch)
    meta = DatasetMeta("synthetic", n, 0, (c, h, w), n_classes, mean, std)
    return batch, meta


def compute_normalization(batch):
    """Per-channel mean/std over all samples and pixels."""
    mean = batch.inputs.mean(axis=(0, 2, 3))
    std = batch.inputs.std(axis=(0, 2, 3))
    return mean, np.maximum(std, 1e-8)


def normalize(batch, meta):
    """Per-channel (x - mean) / std using the meta's (training) statistics."""
    if batch.normalized:
        raise StateError("batch is already normalized")
    if meta.mean is None or meta.std is None:
        raise ValueError("meta has no normalization statistics")
    scaled = (batch.inputs - meta.mean[None, :, None, None]) / meta.std[None, :, None, None]
    return LabeledBatch(scaled, batch.labels, batch.n_classes, normalized=True)
