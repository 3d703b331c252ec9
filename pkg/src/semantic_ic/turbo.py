"""Turbo receiver alternating LDPC decoding and semantic denoising.

Each outer round decodes every block with belief propagation using the fixed
channel LLRs plus the current a priori LLRs, rebuilds the image from the hard
decisions on the message positions, passes it through the auto-encoder, and
turns the denoised image back into a priori LLRs of magnitude ``alpha`` for
the next round. The a priori of a round replaces the previous one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bitcodec, ldpc, metrics
from .autoencoder import SemanticCodec, denoise_pixels
from .bitcodec import BitFrame
from .errors import ConfigurationError, DimensionError
from .ldpc import SystematicCode
from .phy import SnrConfig, channel_llr, substream, transmit

APRIORI_MODES = ("systematic-only", "all-bits")


@dataclass
class TurboConfig:
    outer_rounds: int = 7
    inner_bp_iters: int = 10
    alpha: float = 0.5
    apply_apriori_to: str = "systematic-only"
    early_stop: bool = False

    def __post_init__(self):
        if self.outer_rounds < 1 or self.inner_bp_iters < 1:
            raise ConfigurationError("outer_rounds and inner_bp_iters must be >= 1")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        if self.apply_apriori_to not in APRIORI_MODES:
            raise ConfigurationError(f"unknown a priori mode {self.apply_apriori_to!r}")


@dataclass
class RoundRecord:
    round: int
    ber: float
    ed: float
    psnr: float
    ed_sem: float
    psnr_sem: float
    bp_converged: np.ndarray

    @property
    def converged_fraction(self) -> float:
        return float(np.mean(self.bp_converged))


@dataclass
class IterationTrace:
    rounds: list = field(default_factory=list)

    def __len__(self):
        return len(self.rounds)

    def __getitem__(self, i):
        return self.rounds[i]

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rounds], dtype=np.float64)


@dataclass
class TurboResult:
    image: np.ndarray
    semantic_image: np.ndarray | None
    trace: IterationTrace
    round_images: list = field(default_factory=list)
    round_semantic: list = field(default_factory=list)


@dataclass
class Transmission:
    """One image sent over the channel, with everything needed to score it."""

    source: np.ndarray
    frame: BitFrame
    codewords: np.ndarray
    received: np.ndarray
    snr: SnrConfig

    @property
    def shape(self):
        return self.source.shape


def transmit_image(image, code: SystematicCode, snr: SnrConfig, seed: int, image_index: int,
                   noiseless=False) -> Transmission:
    """Quantize, frame, encode and send an image; block ``b`` uses substream ``(seed, image_index, b)``."""
    image = np.asarray(image, dtype=np.uint8)
    frame = bitcodec.frame_image(bitcodec.quantize_image(image), code.k)
    codewords = ldpc.encode(code, frame.blocks)
    if noiseless:
        received = 1.0 - 2.0 * codewords.astype(np.float64)
    else:
        noise = np.stack(
            [substream(seed, image_index, b).standard_normal(code.n) for b in range(len(codewords))]
        )
        received = transmit(codewords, snr, None, noise=noise)
    return Transmission(image, frame, codewords, received, snr)


def posterior_to_image(posteriors, frame: BitFrame, shape, code: SystematicCode) -> np.ndarray:
    """Hard-decide message positions (bit 0 iff LLR >= 0), deframe and dequantize."""
    posteriors = np.asarray(posteriors)
    if posteriors.ndim != 2 or posteriors.shape[0] != frame.block_count:
        raise DimensionError(
            f"{posteriors.shape[0] if posteriors.ndim else 0} posterior blocks for a frame of "
            f"{frame.block_count} blocks"
        )
    bits = (posteriors[:, code.info_cols] < 0).astype(np.uint8)
    return bitcodec.dequantize_bits(bitcodec.deframe(frame, bits), shape)


def image_to_apriori(denoised, frame: BitFrame, cfg: TurboConfig, code: SystematicCode) -> np.ndarray:
    """A priori LLRs ``alpha * (1 - 2 b)`` from the bits of the denoised image.

    Padding positions always get 0. In ``systematic-only`` mode parity
    positions get 0 as well; in ``all-bits`` mode they carry the parity of the
    re-encoded denoised bits.
    """
    bits = bitcodec.quantize_image(np.asarray(denoised, dtype=np.uint8))
    if bits.size != frame.original_bit_count:
        raise DimensionError(
            f"image has {bits.size} bits, frame was built from {frame.original_bit_count}"
        )
    blocks = bitcodec.frame_image(bits, code.k).blocks
    mask = frame.payload_mask()
    apriori = np.zeros((frame.block_count, code.n))
    if cfg.apply_apriori_to == "all-bits":
        word = ldpc.encode(code, blocks)
        apriori[:] = cfg.alpha * (1.0 - 2.0 * word)
        apriori[:, code.info_cols] *= mask
    else:
        apriori[:, code.info_cols] = cfg.alpha * (1.0 - 2.0 * blocks) * mask
    return apriori


def run_turbo_decode(received, code: SystematicCode, codec: SemanticCodec | None, snr: SnrConfig,
                     cfg: TurboConfig, frame: BitFrame, shape, reference=None,
                     keep_images=False) -> TurboResult:
    """Iterate channel decoding and semantic denoising for one image.

    ``codec=None`` disables the semantic stage entirely (plain repeated LDPC
    decoding); it is only allowed with ``alpha == 0``. ``reference`` is the
    transmitted image, used to fill the per-round metrics.
    """
    if codec is None:
        if cfg.alpha != 0:
            raise ConfigurationError("a semantic codec is required when alpha > 0")
    elif not codec.trained:
        raise ConfigurationError("the semantic codec has not been trained or loaded")
    llr = channel_llr(received, snr)
    apriori = np.zeros_like(llr)
    source_bits = None if reference is None else bitcodec.quantize_image(reference)

    trace = IterationTrace()
    result = TurboResult(None, None, trace)
    last_key, last_decode = None, None
    for r in range(1, cfg.outer_rounds + 1):
        # identical inputs give identical outputs, so skip the repeat decode
        key = apriori.tobytes()
        if key != last_key:
            last_decode = ldpc.bp_decode(code, llr, apriori, cfg.inner_bp_iters)
            last_key = key
        decoded = last_decode
        image = posterior_to_image(decoded.posterior, frame, shape, code)
        semantic = denoise_pixels(codec, image) if codec is not None else None

        trace.rounds.append(_score(r, image, semantic, reference, source_bits, decoded.converged))
        if keep_images:
            result.round_images.append(image)
            result.round_semantic.append(semantic)
        stop = cfg.early_stop and result.image is not None and np.array_equal(image, result.image)
        result.image, result.semantic_image = image, semantic
        if stop:
            break
        if r < cfg.outer_rounds and codec is not None and cfg.alpha > 0:
            apriori = image_to_apriori(semantic, frame, cfg, code)
    return result


def _score(r, image, semantic, reference, source_bits, converged) -> RoundRecord:
    nan = math.nan
    if reference is None:
        return RoundRecord(r, nan, nan, nan, nan, nan, np.array(converged))
    ber = metrics.ber(source_bits, bitcodec.quantize_image(image))
    ed = metrics.euclidean_distance(reference, image)
    ps = metrics.psnr(reference, image)
    if semantic is None:
        ed_sem = ps_sem = nan
    else:
        ed_sem = metrics.euclidean_distance(reference, semantic)
        ps_sem = metrics.psnr(reference, semantic)
    return RoundRecord(r, ber, ed, ps, ed_sem, ps_sem, np.array(converged))


def decode_transmission(tx: Transmission, code, codec, cfg: TurboConfig, keep_images=False) -> TurboResult:
    return run_turbo_decode(tx.received, code, codec, tx.snr, cfg, tx.frame, tx.shape,
                            reference=tx.source, keep_images=keep_images)
