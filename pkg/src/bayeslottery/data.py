"""CIFAR-10 binary records, synthetic desk-scale datasets, and augmentation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)


class CifarFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray  # (n, 2) points or (n, C, H, W) images, float32
    y: np.ndarray  # (n,) int64 labels

    def __len__(self) -> int:
        return len(self.y)

    @property
    def is_image(self) -> bool:
        return self.x.ndim == 4

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


def parse_cifar10(buf: bytes) -> Dataset:
    """Decode CIFAR-10 binary records: 1 label byte then 3072 channel-planar pixels."""
    raw = np.frombuffer(bytes(buf), dtype=np.uint8)
    if raw.size % RECORD_BYTES:
        offset = raw.size - raw.size % RECORD_BYTES
        raise CifarFormatError(
            f"truncated record at offset {offset}: stream length {raw.size} "
            f"is not a multiple of {RECORD_BYTES}")
    recs = raw.reshape(-1, RECORD_BYTES)
    labels = recs[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise CifarFormatError(f"record {bad[0]}: label {labels[bad[0]]} out of range 0-9")
    pixels = recs[:, 1:].reshape(-1, *IMAGE_SHAPE).astype(np.float32) / np.float32(255.0)
    return Dataset(pixels, labels)


def serialize_cifar10(data: Dataset) -> bytes:
    """Inverse of :func:`parse_cifar10` for images on the 1/255 grid."""
    pix = np.rint(np.asarray(data.x, dtype=np.float64) * 255.0).astype(np.uint8)
    out = np.empty((len(data), RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = data.y
    out[:, 1:] = pix.reshape(len(data), -1)
    return out.tobytes()


def load_cifar10(*paths, limit: int | None = None) -> Dataset:
    parts = [parse_cifar10(Path(p).read_bytes()) for p in paths]
    x = np.concatenate([p.x for p in parts])
    y = np.concatenate([p.y for p in parts])
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return Dataset(x, y)


def blob_centers(classes: int, radius: float = 2.0) -> np.ndarray:
    ang = 2 * np.pi * np.arange(classes) / classes
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def grid_centers(classes: int, grid: int, spacing: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """``grid`` x ``grid`` blob centers; cell (r, c) belongs to class (r + 2c) mod classes."""
    r, c = np.divmod(np.arange(grid * grid), grid)
    centers = spacing * (np.stack([c, r], axis=1) - (grid - 1) / 2)
    return centers, (r + 2 * c) % classes


def synth_blobs(n_per_class: int, classes: int = 2, spread: float = 0.5, seed=0,
                radius: float = 2.0, grid: int = 0) -> Dataset:
    """Isotropic Gaussian blobs.

    With ``grid=0`` each class is one blob and the centers sit evenly on a
    circle of ``radius``. With ``grid=g`` there are g*g unit-spaced blobs
    and each class owns several of them, so the classes are not linearly
    separable.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    if grid:
        centers, owner = grid_centers(classes, grid)
        cells = [np.flatnonzero(owner == k) for k in range(classes)]
        y = np.repeat(np.arange(classes), n_per_class)
        which = np.concatenate([rng.choice(cells[k], n_per_class) for k in range(classes)])
        x = centers[which] + spread * rng.standard_normal((len(y), 2))
    else:
        centers = blob_centers(classes, radius)
        y = np.repeat(np.arange(classes), n_per_class)
        x = centers[y] + spread * rng.standard_normal((len(y), 2))
    perm = rng.permutation(len(y))
    return Dataset(x[perm].astype(np.float32), y[perm].astype(np.int64))


def synth_moons(n: int, noise: float = 0.1, seed=0) -> Dataset:
    """Two interleaved half circles, ``n`` points per class."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    t = np.pi * rng.random(n)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    t = np.pi * rng.random(n)
    lower = np.stack([1 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    x = np.concatenate([upper, lower]) + noise * rng.standard_normal((2 * n, 2))
    y = np.repeat([0, 1], n)
    perm = rng.permutation(2 * n)
    return Dataset(x[perm].astype(np.float32), y[perm].astype(np.int64))


def synth_images(n_per_class: int, classes: int = 4, size: int = 8, noise: float = 0.3,
                 seed=0) -> Dataset:
    """Small 3-channel images: a class-specific oriented stripe pattern plus noise."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    protos = []
    for k in range(classes):
        ang = math.pi * k / classes
        wave = np.cos(2 * math.pi * 2 * (np.cos(ang) * xx + np.sin(ang) * yy))
        protos.append(np.stack([wave, wave * (k % 2 * 2 - 1), np.full_like(wave, k / classes)]))
    protos = np.stack(protos)
    y = np.repeat(np.arange(classes), n_per_class)
    x = protos[y] + noise * rng.standard_normal((len(y), 3, size, size))
    perm = rng.permutation(len(y))
    return Dataset(x[perm].astype(np.float32), y[perm].astype(np.int64))


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return img[..., ::-1].copy()


def crop(img: np.ndarray, top: int, left: int, pad: int = 4) -> np.ndarray:
    """Zero-pad by ``pad`` then take an HxW window at (top, left) of the padded image."""
    c, h, w = img.shape
    padded = np.pad(img, ((0, 0), (pad, pad), (pad, pad)))
    return padded[:, top:top + h, left:left + w].copy()


def augment(x: np.ndarray, seed, pad: int = 4) -> np.ndarray:
    """Random horizontal flip (p=0.5) and pad-then-crop; non-images pass through."""
    x = np.asarray(x)
    if x.ndim not in (3, 4):
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    batch = x if x.ndim == 4 else x[None]
    out = np.empty_like(batch)
    flips = rng.random(len(batch)) < 0.5
    offs = rng.integers(0, 2 * pad + 1, size=(len(batch), 2))
    for i, img in enumerate(batch):
        if flips[i]:
            img = img[..., ::-1]
        out[i] = crop(img, offs[i, 0], offs[i, 1], pad)
    return out if x.ndim == 4 else out[0]
