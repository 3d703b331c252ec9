"""Convolutional semantic auto-encoder used as the receiver's learned denoiser.

The encoder is a stack of strided valid convolutions and the decoder mirrors
it with transposed convolutions. The network is trained as a denoising
auto-encoder, mapping corrupted images back to the clean originals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nncore
from .errors import ConfigurationError, DimensionError
from .nncore import AdamConfig, ConvLayerSpec, Layer, Sequential

DEFAULT_ENCODER = (
    ConvLayerSpec(27, 4, 4, 2, "conv", "relu"),
    ConvLayerSpec(16, 3, 3, 2, "conv", "relu"),
)
DEFAULT_DECODER = (
    ConvLayerSpec(27, 3, 3, 2, "tconv", "relu"),
    ConvLayerSpec(3, 4, 4, 2, "tconv", "sigmoid"),
)
DEFAULT_INPUT_SHAPE = (3, 96, 96)

# named (training images, epochs) profiles
PROFILES = {
    "desk": {"images": 2000, "epochs": 20},
    "paper": {"images": 50000, "epochs": 200},
}


@dataclass(frozen=True)
class SemanticCodecSpec:
    encoder_layers: tuple
    decoder_layers: tuple
    input_shape: tuple = DEFAULT_INPUT_SHAPE
    latent_shape: tuple = None

    def __post_init__(self):
        c, h, w = self.input_shape
        for spec in self.encoder_layers:
            h, w = spec.output_hw(h, w)
            c = spec.n_filters
        latent = (c, h, w)
        if self.latent_shape is None:
            object.__setattr__(self, "latent_shape", latent)
        elif tuple(self.latent_shape) != latent:
            raise ConfigurationError(
                f"encoder maps {self.input_shape} to {latent}, not {self.latent_shape}"
            )
        for spec in self.decoder_layers:
            h, w = spec.output_hw(h, w)
            c = spec.n_filters
        if (c, h, w) != tuple(self.input_shape):
            raise ConfigurationError(
                f"decoder maps {self.latent_shape} to {(c, h, w)}, not {self.input_shape}"
            )

    @property
    def compression_ratio(self) -> float:
        return float(np.prod(self.latent_shape) / np.prod(self.input_shape))


@dataclass
class CorruptionSpec:
    """Noise injected at the auto-encoder input during training."""

    mode: str = "bitflip"
    bitflip_ber_range: tuple = (0.001, 0.05)
    gaussian_sigma: float = 0.05

    def __post_init__(self):
        if self.mode not in ("bitflip", "gaussian", "none"):
            raise ConfigurationError(f"unknown corruption mode {self.mode!r}")
        low, high = self.bitflip_ber_range
        if not 0 <= low <= high <= 0.5:
            raise ConfigurationError(f"bitflip_ber_range must satisfy 0 <= low <= high <= 0.5")
        if self.gaussian_sigma < 0:
            raise ConfigurationError("gaussian_sigma must be nonnegative")


@dataclass
class TrainingConfig:
    learning_rate: float = 0.003
    batch_size: int = 64
    epochs: int = 200
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")

    @classmethod
    def for_profile(cls, profile: str, **overrides):
        if profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {profile!r}")
        return cls(epochs=PROFILES[profile]["epochs"], **overrides)


class SemanticCodec:
    """Encoder/decoder network plus its architecture description.

    ``trained`` is set once weights come from :func:`train` or a weights file;
    the turbo receiver refuses to run on an untrained codec.
    """

    def __init__(self, spec: SemanticCodecSpec, model: Sequential, trained=False):
        self.spec = spec
        self.model = model
        self.trained = trained

    @property
    def n_encoder_layers(self) -> int:
        return len(self.spec.encoder_layers)

    def num_parameters(self) -> int:
        return self.model.num_parameters()

    def encode(self, x):
        for layer in self.model.layers[: self.n_encoder_layers]:
            x = layer.forward(x)
        return x

    def decode(self, z):
        for layer in self.model.layers[self.n_encoder_layers :]:
            z = layer.forward(z)
        return z

    def save(self, path):
        nncore.save_weights(self.model, path)

    @classmethod
    def load(cls, path, input_shape=DEFAULT_INPUT_SHAPE) -> SemanticCodec:
        """Read a weights file. The file stores no input shape, so it is passed in."""
        model = nncore.load_weights(path)
        specs = [layer.spec for layer in model]
        spec = SemanticCodecSpec(
            tuple(s for s in specs if s.kind == "conv"),
            tuple(s for s in specs if s.kind == "tconv"),
            tuple(input_shape),
        )
        return cls(spec, model, trained=True)


def build_codec(spec: SemanticCodecSpec, seed=0, dtype=np.float32) -> SemanticCodec:
    rng = np.random.default_rng(seed)
    layers = []
    channels = spec.input_shape[0]
    for layer_spec in (*spec.encoder_layers, *spec.decoder_layers):
        layers.append(Layer.create(layer_spec, channels, rng, dtype))
        channels = layer_spec.n_filters
    return SemanticCodec(spec, Sequential(layers))


def build_default_codec(seed=0) -> SemanticCodec:
    spec = SemanticCodecSpec(DEFAULT_ENCODER, DEFAULT_DECODER, DEFAULT_INPUT_SHAPE)
    return build_codec(spec, seed)


def codec_forward(codec: SemanticCodec, image, chunk=256):
    """Encode then decode ``image`` (``(n, c, h, w)`` in [0, 1]); output clamped to [0, 1]."""
    image = np.asarray(image)
    if image.ndim != 4 or image.shape[1:] != tuple(codec.spec.input_shape):
        raise DimensionError(
            f"image shape {image.shape} does not match codec input {codec.spec.input_shape}"
        )
    x = image.astype(codec.model.dtype, copy=False)
    out = np.concatenate(
        [codec.model.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)]
    )
    return np.clip(out, 0.0, 1.0)


def denoise_pixels(codec: SemanticCodec, pixels):
    """Run the codec on 8-bit images ``(c, h, w)`` or ``(n, c, h, w)``, returning 8-bit images."""
    pixels = np.asarray(pixels)
    single = pixels.ndim == 3
    batch = pixels[None] if single else pixels
    out = codec_forward(codec, batch.astype(np.float32) / 255.0)
    out = np.rint(out * 255.0).astype(np.uint8)
    return out[0] if single else out


def corrupt_for_training(image, spec: CorruptionSpec, rng):
    """Corrupt a batch ``(n, c, h, w)`` of [0, 1] images.

    In bitflip mode every image draws its own flip probability uniformly from
    ``spec.bitflip_ber_range`` and each bit of its 8-bit quantization flips
    independently with that probability.
    """
    image = np.asarray(image)
    if spec.mode == "none":
        return image.copy()
    if spec.mode == "gaussian":
        noisy = image + rng.normal(0.0, spec.gaussian_sigma, size=image.shape)
        return np.clip(noisy, 0.0, 1.0).astype(image.dtype)
    low, high = spec.bitflip_ber_range
    if high == 0:
        return image.copy()
    q = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    p = rng.uniform(low, high, size=len(q)).astype(np.float32)
    p = p.reshape((-1,) + (1,) * (q.ndim - 1))
    for bit in range(8):
        flips = rng.random(q.shape, dtype=np.float32) < p
        q ^= flips.astype(np.uint8) << bit
    return (q.astype(np.float32) / 255.0).astype(image.dtype)


def train(codec: SemanticCodec, images, cfg: TrainingConfig, log_path=None, progress=None):
    """Fit ``codec`` as a denoiser of ``images`` with Adam on the MSE loss.

    ``images`` is ``(n, c, h, w)``, either uint8 pixels or floats in [0, 1].
    Returns the list of per-epoch mean losses. Fully determined by ``cfg.seed``.
    """
    images = np.asarray(images)
    if len(images) == 0:
        raise ConfigurationError("training dataset is empty")
    if images.dtype == np.uint8:
        images = images.astype(np.float32) / 255.0
    images = images.astype(codec.model.dtype, copy=False)
    if images.shape[1:] != tuple(codec.spec.input_shape):
        raise DimensionError(
            f"training images {images.shape} do not match codec input {codec.spec.input_shape}"
        )

    shuffle_seq, noise_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    adam = AdamConfig(learning_rate=cfg.learning_rate)
    model = codec.model
    model.zero_grad()

    history = []
    n = len(images)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            clean = images[order[start : start + cfg.batch_size]]
            noisy = corrupt_for_training(clean, cfg.corruption, noise_rng)
            pred = model.forward(noisy, keep=True)
            loss, grad = nncore.mse_loss(pred, clean)
            model.backward(grad)
            nncore.adam_step(model.states, adam)
            total += loss * len(clean)
        history.append(total / n)
        if progress is not None:
            progress(epoch + 1, history[-1])

    codec.trained = True
    if log_path is not None:
        write_training_log(history, log_path)
    return history


def write_training_log(history, path):
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(history, start=1):
            writer.writerow([epoch, repr(float(loss))])
