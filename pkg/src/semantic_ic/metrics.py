"""Distortion metrics and the empirical mutual-information gain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

MI_MIN_LENGTH = 10_000


def _same_shape(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def ber(sent, recovered) -> float:
    sent, recovered = _same_shape(sent, recovered)
    if sent.size == 0:
        return 0.0
    return float(np.count_nonzero(sent != recovered) / sent.size)


def euclidean_distance(a, b) -> float:
    """Un-normalized distance between two 8-bit images, samples in [0, 255]."""
    a, b = _same_shape(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.sum(d * d)))


def psnr(a, b) -> float:
    """PSNR in dB with peak 255; identical images give ``math.inf``."""
    a, b = _same_shape(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(d * d))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def mutual_information(x, y):
    """Plug-in estimate of I(X; Y) in bits for binary sequences.

    Returns ``(mi, degenerate)``; a constant sequence on either side yields
    ``(0.0, True)``.
    """
    x, y = _same_shape(x, y)
    x = x.reshape(-1).astype(np.int64)
    y = y.reshape(-1).astype(np.int64)
    joint = np.bincount(2 * x + y, minlength=4).reshape(2, 2) / x.size
    px, py = joint.sum(axis=1), joint.sum(axis=0)
    if np.any(px == 0) or np.any(py == 0):
        return 0.0, True
    mi = 0.0
    for i in range(2):
        for j in range(2):
            if joint[i, j] > 0:
                mi += joint[i, j] * math.log2(joint[i, j] / (px[i] * py[j]))
    return max(mi, 0.0), False


@dataclass
class MIGain:
    i_semantic: float
    i_channel: float
    degenerate: bool = False

    @property
    def gain(self) -> float:
        return self.i_semantic - self.i_channel


def mi_gain_empirical(sent, recovered_semantic, recovered_channel, min_length=MI_MIN_LENGTH) -> MIGain:
    """Bit-level ``I(X; X_S) - I(X; X_C)``."""
    sent = np.asarray(sent).reshape(-1)
    if sent.size < min_length:
        raise DimensionError(f"need at least {min_length} bits for a stable estimate, got {sent.size}")
    i_s, deg_s = mutual_information(sent, recovered_semantic)
    i_c, deg_c = mutual_information(sent, recovered_channel)
    return MIGain(i_s, i_c, deg_s or deg_c)


def binary_entropy(p: float) -> float:
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)
