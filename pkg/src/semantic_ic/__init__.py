"""Turbo receiver combining LDPC belief propagation with a semantic auto-encoder."""

from .autoencoder import SemanticCodec, TrainingConfig, build_default_codec, train
from .errors import ConfigurationError, DimensionError, FormatError, NumericError
from .ldpc import CodeSpec, bp_decode, construct_regular_code, encode, systematize
from .phy import SnrConfig
from .turbo import TurboConfig, decode_transmission, run_turbo_decode, transmit_image

__version__ = "0.1.0"

__all__ = [
    "CodeSpec",
    "ConfigurationError",
    "DimensionError",
    "FormatError",
    "NumericError",
    "SemanticCodec",
    "SnrConfig",
    "TrainingConfig",
    "TurboConfig",
    "bp_decode",
    "build_default_codec",
    "construct_regular_code",
    "decode_transmission",
    "encode",
    "run_turbo_decode",
    "systematize",
    "train",
    "transmit_image",
]
