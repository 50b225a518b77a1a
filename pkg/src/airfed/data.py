"""Datasets: synthetic blobs, IDX file loading, and device partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix, integer labels, and per-device shard index sets.

    Shards are disjoint index arrays into ``inputs``/``labels``; a balanced
    partition gives every device the same shard size.
    """

    inputs: np.ndarray            # (n, d) float64
    labels: np.ndarray            # (n,) int64
    shards: list[np.ndarray]

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n_devices(self) -> int:
        return len(self.shards)

    def shard_view(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        idx = self.shards[k]
        return self.inputs[idx], self.labels[idx]

    def validate(self, n_classes: int | None = None):
        all_idx = np.concatenate(self.shards) if self.shards else np.array([], dtype=int)
        if len(np.unique(all_idx)) != all_idx.size:
            raise ValueError("shards overlap")
        if n_classes is not None:
            if self.labels.min(initial=0) < 0 or self.labels.max(initial=0) >= n_classes:
                raise ValueError("label out of range")


def make_blobs(classes: int, dim: int, spread: float, n_samples: int,
               rng: np.random.Generator, centers: np.ndarray | None = None
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian class blobs: unit-scale random centers, per-class std `spread`.

    Samples are balanced across classes (n_samples must divide evenly) and
    returned in label order; shuffle downstream if needed. Pass the returned
    centers back in to draw more samples from the same population (e.g. a
    held-out test split).
    """
    if n_samples % classes != 0:
        raise ValueError("n_samples must be divisible by the number of classes")
    per = n_samples // classes
    if centers is None:
        centers = rng.normal(0.0, 1.0, size=(classes, dim))
    X = np.repeat(centers, per, axis=0) + spread * rng.normal(size=(n_samples, dim))
    y = np.repeat(np.arange(classes), per)
    return X, y, centers


def make_isotropic_regression(n_samples: int, dim: int, curvature: float,
                              noise_std: float, rng: np.random.Generator
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares instance whose Hessian is exactly curvature * identity.

    Columns are orthonormalized and rescaled, which pins the smoothness
    constant and makes the gradient-vs-loss-gap relation tight; targets are a
    random linear map plus Gaussian noise so the optimal loss is nonzero.
    """
    if n_samples < dim:
        raise ValueError("need at least as many samples as features")
    raw = rng.normal(size=(n_samples, dim))
    q, _ = np.linalg.qr(raw)
    X = q * np.sqrt(curvature * n_samples)
    w_true = rng.normal(size=dim)
    y = X @ w_true + noise_std * rng.normal(size=n_samples)
    return X, y


def read_idx(path: str | Path) -> np.ndarray:
    """Read one IDX file (big-endian); returns images (n, rows*cols) or labels (n,)."""
    raw = Path(path).read_bytes()
    magic, = struct.unpack(">I", raw[:4])
    if magic == IDX_IMAGE_MAGIC:
        n, rows, cols = struct.unpack(">III", raw[4:16])
        data = np.frombuffer(raw, dtype=np.uint8, offset=16)
        if data.size != n * rows * cols:
            raise ValueError("truncated IDX image file")
        return data.reshape(n, rows * cols).astype(np.float64) / 255.0
    if magic == IDX_LABEL_MAGIC:
        n, = struct.unpack(">I", raw[4:8])
        data = np.frombuffer(raw, dtype=np.uint8, offset=8)
        if data.size != n:
            raise ValueError("truncated IDX label file")
        return data.astype(np.int64)
    raise ValueError(f"unrecognized IDX magic 0x{magic:08x}")


def write_idx_images(path: str | Path, images: np.ndarray, rows: int, cols: int):
    n = images.shape[0]
    body = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8).tobytes()
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols) + body)


def write_idx_labels(path: str | Path, labels: np.ndarray):
    body = labels.astype(np.uint8).tobytes()
    Path(path).write_bytes(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]) + body)


def partition_data(labels: np.ndarray, n_devices: int, mode: str,
                   rng: np.random.Generator) -> list[np.ndarray]:
    """Split sample indices into per-device shards.

    iid: uniform random balanced split. noniid: the label set is carved into
    5 groups of 2 consecutive classes; every group is randomly spread over
    n_devices/5 devices, so each device only ever sees 2 classes.
    """
    n = labels.shape[0]
    if mode == "iid":
        if n % n_devices != 0:
            raise ValueError("sample count not divisible by device count")
        perm = rng.permutation(n)
        return [np.sort(part) for part in np.split(perm, n_devices)]
    if mode == "noniid":
        n_classes = int(labels.max()) + 1
        if n_classes % 5 != 0 or n_classes // 5 != 2:
            raise ValueError("non-iid mode needs exactly 10 classes (5 groups of 2)")
        if n_devices % 5 != 0:
            raise ValueError("non-iid mode needs device count divisible by 5")
        per_group = n_devices // 5
        shards: list[np.ndarray] = []
        for g in range(5):
            idx = np.flatnonzero((labels == 2 * g) | (labels == 2 * g + 1))
            if idx.size % per_group != 0:
                raise ValueError("group sample count not divisible by devices per group")
            perm = rng.permutation(idx)
            shards.extend(np.sort(part) for part in np.split(perm, per_group))
        return shards
    raise ValueError(f"unknown partition mode {mode!r}")
