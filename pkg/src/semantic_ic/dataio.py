"""CIFAR-10 binary ingestion, integer upscaling and PNG output.

A CIFAR-10 binary record is 3073 bytes: one label byte followed by the red,
green and blue 32x32 planes in row-major order. Labels are read and dropped.

:func:`write_synthetic_cifar10` writes a stand-in dataset in the same layout
for machines without the real files: smooth backgrounds with a few shaded
shapes and light texture, so that an auto-encoder has spatial structure to
learn.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigurationError, FormatError

RECORD_BYTES = 3073
SIDE = 32
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)
RECORDS_PER_FILE = 10_000


def _resolve_dir(directory) -> Path:
    directory = Path(directory)
    nested = directory / "cifar-10-batches-bin"
    return nested if nested.is_dir() else directory


def split_files(directory, split: str) -> list[Path]:
    if split not in ("train", "test"):
        raise ConfigurationError(f"unknown split {split!r}")
    directory = _resolve_dir(directory)
    names = TRAIN_FILES if split == "train" else TEST_FILES
    files = [directory / name for name in names if (directory / name).exists()]
    if not files:
        raise FormatError(f"no {split} batch files found in {directory}", 0)
    return files


def read_cifar10(directory, split="test", limit=None) -> np.ndarray:
    """Images of one split as uint8 ``(n, 3, 32, 32)``, in file order."""
    chunks = []
    remaining = limit
    for path in split_files(directory, split):
        size = os.path.getsize(path)
        if size % RECORD_BYTES:
            raise FormatError(
                f"{path.name} is {size} bytes, not a multiple of {RECORD_BYTES}",
                size - size % RECORD_BYTES,
            )
        count = size // RECORD_BYTES
        if remaining is not None:
            count = min(count, remaining)
        raw = np.fromfile(path, dtype=np.uint8, count=count * RECORD_BYTES)
        chunks.append(raw.reshape(count, RECORD_BYTES)[:, 1:].reshape(count, 3, SIDE, SIDE))
        if remaining is not None:
            remaining -= count
            if remaining <= 0:
                break
    return np.concatenate(chunks) if chunks else np.zeros((0, 3, SIDE, SIDE), np.uint8)


def write_cifar10_file(path, images, labels=None):
    images = np.asarray(images, dtype=np.uint8)
    n = len(images)
    labels = np.zeros(n, np.uint8) if labels is None else np.asarray(labels, np.uint8)
    records = np.concatenate([labels[:, None], images.reshape(n, -1)], axis=1)
    Path(path).write_bytes(records.tobytes())


def resize_nn(img, factor=3) -> np.ndarray:
    """Nearest-neighbour upscaling of ``(..., h, w)`` by an integer factor."""
    if int(factor) != factor or factor < 1:
        raise ConfigurationError(f"resize factor must be a positive integer, got {factor}")
    factor = int(factor)
    img = np.asarray(img)
    return img.repeat(factor, axis=-2).repeat(factor, axis=-1)


def load_images(directory, split="test", limit=None, factor=3) -> np.ndarray:
    return resize_nn(read_cifar10(directory, split, limit), factor)


def write_image(img, path):
    """Write a ``(3, h, w)`` uint8 image as PNG."""
    img = np.asarray(img, dtype=np.uint8)
    Image.fromarray(np.ascontiguousarray(img.transpose(1, 2, 0)), mode="RGB").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).transpose(2, 0, 1).copy()


# ---------------------------------------------------------------------------
# synthetic stand-in data
# ---------------------------------------------------------------------------

def synthetic_image(rng, side=SIDE) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) / (side - 1)
    top, bottom = rng.uniform(0, 255, 3), rng.uniform(0, 255, 3)
    horizon = rng.uniform(0.3, 0.8)
    blend = np.clip((yy - horizon) * rng.uniform(2, 12) + 0.5, 0, 1)
    img = top[:, None, None] * (1 - blend) + bottom[:, None, None] * blend
    img += ndimage.gaussian_filter(rng.normal(0, 40, (3, side, side)), sigma=(0, 4, 4))

    for _ in range(rng.integers(1, 5)):
        cy, cx = rng.uniform(0.1, 0.9, 2)
        ry, rx = rng.uniform(0.08, 0.35, 2)
        color = rng.uniform(0, 255, 3)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        shade = 1 + rng.uniform(-0.35, 0.35) * ((yy - cy) + (xx - cx))
        img = np.where(mask, color[:, None, None] * shade, img)

    img = ndimage.gaussian_filter(img, sigma=(0, 0.6, 0.6))
    img += ndimage.gaussian_filter(rng.normal(0, 6, img.shape), sigma=(0, 0.5, 0.5))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_synthetic_cifar10(directory, n_train=2000, n_test=200, seed=0):
    """Write ``data_batch_*.bin`` and ``test_batch.bin`` filled with synthetic images."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_seq, test_seq = np.random.SeedSequence(seed).spawn(2)
    train_rng, test_rng = np.random.default_rng(train_seq), np.random.default_rng(test_seq)
    written = 0
    for name in TRAIN_FILES:
        count = min(RECORDS_PER_FILE, n_train - written)
        if count <= 0:
            break
        write_cifar10_file(directory / name, [synthetic_image(train_rng) for _ in range(count)])
        written += count
    write_cifar10_file(directory / TEST_FILES[0], [synthetic_image(test_rng) for _ in range(n_test)])
    return directory
