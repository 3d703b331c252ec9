"""BPSK over AWGN and the matching channel LLRs.

SNR is symbol energy over noise variance with unit-energy symbols, so
``sigma2 = 10 ** (-snr_db / 10)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class SnrConfig:
    snr_db: float

    @property
    def sigma2(self) -> float:
        sigma2 = 10.0 ** (-self.snr_db / 10.0)
        if not sigma2 > 0:
            raise ConfigurationError(f"snr_db={self.snr_db} gives a zero noise variance")
        return sigma2


def substream(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent Philox stream keyed by ``(master_seed, *indices)``."""
    seq = np.random.SeedSequence([int(master_seed), *map(int, indices)])
    return np.random.Generator(np.random.Philox(seq))


def modulate(bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def transmit(bits, snr: SnrConfig, rng, noise=None):
    """Send ``bits`` as BPSK symbols (+1 for 0, -1 for 1) through AWGN.

    ``noise`` may carry a pre-drawn standard normal array of the same shape;
    it is scaled by the channel's standard deviation. This lets several SNR
    points reuse one realization.
    """
    x = modulate(bits)
    if noise is None:
        noise = rng.standard_normal(x.shape)
    return x + np.sqrt(snr.sigma2) * noise


def channel_llr(received, snr: SnrConfig) -> np.ndarray:
    """``2 y / sigma2``; positive favours bit 0."""
    return 2.0 * np.asarray(received, dtype=np.float64) / snr.sigma2


def hard_decision(received) -> np.ndarray:
    return (np.asarray(received) < 0).astype(np.uint8)
