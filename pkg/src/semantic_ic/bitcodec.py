"""Pixel/bit conversion and framing of images into fixed-size code blocks.

Bytes are expanded MSB first in natural binary, walking the image in
channel-major, row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError


@dataclass
class BitFrame:
    """Bits split into ``block_count`` rows of ``k`` bits, zero padded at the end."""

    blocks: np.ndarray
    original_bit_count: int
    k: int

    @property
    def block_count(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def padding(self) -> int:
        return self.block_count * self.k - self.original_bit_count

    def payload_mask(self) -> np.ndarray:
        """Boolean ``(block_count, k)`` array, False on padding positions."""
        mask = np.zeros(self.block_count * self.k, dtype=bool)
        mask[: self.original_bit_count] = True
        return mask.reshape(self.block_count, self.k)


def quantize_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DimensionError(f"expected 8-bit samples, got dtype {img.dtype}")
    return np.unpackbits(img.reshape(-1))


def dequantize_bits(bits, shape) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    expected = int(np.prod(shape)) * 8
    if bits.size != expected:
        raise DimensionError(f"{bits.size} bits cannot fill an image of shape {tuple(shape)}")
    return np.packbits(bits.reshape(-1)).reshape(shape)


def frame_image(bits, k: int) -> BitFrame:
    if k < 1:
        raise ConfigurationError("block size k must be >= 1")
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    count = -(-bits.size // k)
    padded = np.zeros(count * k, dtype=np.uint8)
    padded[: bits.size] = bits
    return BitFrame(padded.reshape(count, k), bits.size, k)


def deframe(frame: BitFrame, blocks=None) -> np.ndarray:
    """Concatenate blocks (``frame.blocks`` or a replacement of the same shape) and drop padding."""
    blocks = frame.blocks if blocks is None else np.asarray(blocks)
    if blocks.shape != frame.blocks.shape:
        raise DimensionError(f"blocks shape {blocks.shape} differs from frame {frame.blocks.shape}")
    return blocks.reshape(-1)[: frame.original_bit_count].copy()
