"""Minimal convolutional network substrate on numpy.

Tensors are plain ``numpy.ndarray`` objects laid out as ``(n, c, h, w)``.
Two layer kinds are supported, valid (unpadded) strided convolution and its
exact adjoint, transposed convolution. Each layer applies an elementwise
activation after the affine map. Gradients are written by hand and checked
against central finite differences in :func:`gradient_check`.

Weights of both kinds are stored as ``(out_c, in_c, h_K, w_K)``. For a
transposed convolution ``out_c`` is the number of produced channels, so the
adjoint of a convolution with weights ``V`` is the transposed convolution
with weights ``V.swapaxes(0, 1)``.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, FormatError, NumericError

ACTIVATIONS = ("none", "relu", "sigmoid")
KINDS = ("conv", "tconv")

WEIGHTS_MAGIC = b"SEMW"
WEIGHTS_VERSION = 1
_KIND_TAG = {"conv": 0, "tconv": 1}
_ACT_TAG = {"none": 0, "relu": 1, "sigmoid": 2}


@dataclass(frozen=True)
class ConvLayerSpec:
    """Hyper-parameters of one layer: ``{n_F, (w_K, h_K), s}`` plus kind."""

    n_filters: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    kind: str = "conv"
    activation: str = "relu"

    def __post_init__(self):
        if min(self.n_filters, self.kernel_h, self.kernel_w, self.stride) < 1:
            raise ConfigurationError(f"layer dimensions must be >= 1: {self}")
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        s = self.stride
        if self.kind == "conv":
            if h < self.kernel_h or w < self.kernel_w:
                raise DimensionError(
                    f"input {h}x{w} smaller than kernel {self.kernel_h}x{self.kernel_w}"
                )
            return (h - self.kernel_h) // s + 1, (w - self.kernel_w) // s + 1
        return (h - 1) * s + self.kernel_h, (w - 1) * s + self.kernel_w


@dataclass
class LayerState:
    """Trainable parameters of a layer with their gradients and Adam moments."""

    weights: np.ndarray
    bias: np.ndarray
    grad_weights: np.ndarray = None
    grad_bias: np.ndarray = None
    adam_m: list = field(default=None)
    adam_v: list = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )
        if self.grad_weights is None:
            self.grad_weights = np.zeros_like(self.weights)
        if self.grad_bias is None:
            self.grad_bias = np.zeros_like(self.bias)
        if self.adam_m is None:
            self.adam_m = [np.zeros_like(self.weights), np.zeros_like(self.bias)]
        if self.adam_v is None:
            self.adam_v = [np.zeros_like(self.weights), np.zeros_like(self.bias)]

    @classmethod
    def initialize(cls, out_c, in_c, kernel_h, kernel_w, rng, dtype=np.float32):
        """Fan-in scaled uniform init, bias zero."""
        bound = np.sqrt(1.0 / (in_c * kernel_h * kernel_w))
        w = rng.uniform(-bound, bound, size=(out_c, in_c, kernel_h, kernel_w))
        return cls(weights=w.astype(dtype), bias=np.zeros(out_c, dtype=dtype))

    @property
    def params(self):
        return [self.weights, self.bias]

    @property
    def grads(self):
        return [self.grad_weights, self.grad_bias]

    def zero_grad(self):
        self.grad_weights[...] = 0
        self.grad_bias[...] = 0

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def astype(self, dtype) -> LayerState:
        return LayerState(
            weights=self.weights.astype(dtype),
            bias=self.bias.astype(dtype),
            grad_weights=self.grad_weights.astype(dtype),
            grad_bias=self.grad_bias.astype(dtype),
            adam_m=[a.astype(dtype) for a in self.adam_m],
            adam_v=[a.astype(dtype) for a in self.adam_v],
            step_count=self.step_count,
        )


@dataclass
class AdamConfig:
    learning_rate: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")


# ---------------------------------------------------------------------------
# im2col helpers
# ---------------------------------------------------------------------------

def _im2col(x, kh, kw, s, out_h, out_w):
    """Strided patches of ``x`` as ``(n, out_h, out_w, c, kh, kw)`` (a view)."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (out_h - 1) * s + 1 : s, : (out_w - 1) * s + 1 : s]
    return win.transpose(0, 2, 3, 1, 4, 5)


def _col2im(cols, out_shape, s):
    """Scatter-add patches ``(n, ph, pw, c, kh, kw)`` into an ``out_shape`` array."""
    n, ph, pw, c, kh, kw = cols.shape
    out = np.zeros(out_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (ph - 1) * s + 1 : s, j : j + (pw - 1) * s + 1 : s] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return out


def _check_input(x, state, spec):
    if x.ndim != 4:
        raise DimensionError(f"expected a 4-d (n, c, h, w) tensor, got shape {x.shape}")
    w = state.weights
    in_c = w.shape[1]
    if x.shape[1] != in_c:
        raise DimensionError(
            f"input shape {x.shape} has {x.shape[1]} channels but weights "
            f"{w.shape} expect {in_c}"
        )
    if w.shape[0] != spec.n_filters or w.shape[2:] != (spec.kernel_h, spec.kernel_w):
        raise DimensionError(f"weights {w.shape} do not match layer spec {spec}")


def _affine_forward(x, state, spec):
    _check_input(x, state, spec)
    n, c, h, w = x.shape
    oh, ow = spec.output_hw(h, w)
    kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
    weights = state.weights
    out_c = weights.shape[0]
    if spec.kind == "conv":
        cols = _im2col(x, kh, kw, s, oh, ow).reshape(n * oh * ow, c * kh * kw)
        z = cols @ weights.reshape(out_c, -1).T
        z = z.reshape(n, oh, ow, out_c).transpose(0, 3, 1, 2)
    else:
        xm = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
        wt = weights.transpose(1, 0, 2, 3).reshape(c, out_c * kh * kw)
        cols = (xm @ wt).reshape(n, h, w, out_c, kh, kw)
        z = _col2im(cols, (n, out_c, oh, ow), s)
    return z + state.bias[None, :, None, None]


def _affine_backward(x, g, state, spec):
    """Input gradient of the affine map; parameter gradients accumulate in ``state``."""
    n, c, h, w = x.shape
    kh, kw, s = spec.kernel_h, spec.kernel_w, spec.stride
    weights = state.weights
    out_c = weights.shape[0]
    if spec.kind == "conv":
        oh, ow = g.shape[2:]
        cols = _im2col(x, kh, kw, s, oh, ow).reshape(n * oh * ow, c * kh * kw)
        gm = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, out_c)
        state.grad_weights += (gm.T @ cols).reshape(weights.shape)
        dcols = (gm @ weights.reshape(out_c, -1)).reshape(n, oh, ow, c, kh, kw)
        dx = _col2im(dcols, x.shape, s)
    else:
        gcols = _im2col(g, kh, kw, s, h, w).reshape(n * h * w, out_c * kh * kw)
        xm = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
        wt = weights.transpose(1, 0, 2, 3).reshape(c, out_c * kh * kw)
        dwt = (xm.T @ gcols).reshape(c, out_c, kh, kw)
        state.grad_weights += dwt.transpose(1, 0, 2, 3)
        dx = (gcols @ wt.T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    state.grad_bias += g.sum(axis=(0, 2, 3))
    return dx


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_apply(x, kind, direction="forward", upstream=None):
    """Elementwise activation. ``x`` is always the pre-activation input.

    With ``direction="backward"`` the result is ``upstream * f'(x)``.
    """
    if kind not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {kind!r}")
    x = np.asarray(x)
    if direction == "forward":
        if kind == "relu":
            return np.maximum(x, 0)
        if kind == "sigmoid":
            return _sigmoid(x)
        return x.copy()
    if direction != "backward":
        raise ConfigurationError(f"unknown direction {direction!r}")
    if upstream is None:
        raise ConfigurationError("backward direction needs an upstream gradient")
    if kind == "relu":
        return upstream * (x > 0)
    if kind == "sigmoid":
        y = _sigmoid(x)
        return upstream * y * (1 - y)
    return np.array(upstream, copy=True)


def _layer_apply(x, state, spec, kind):
    if spec.kind != kind:
        raise ConfigurationError(f"layer spec kind is {spec.kind!r}, expected {kind!r}")
    return activation_apply(_affine_forward(x, state, spec), spec.activation)


def _layer_grad(x, upstream, state, spec, kind):
    if spec.kind != kind:
        raise ConfigurationError(f"layer spec kind is {spec.kind!r}, expected {kind!r}")
    z = _affine_forward(x, state, spec)
    if upstream.shape != z.shape:
        raise DimensionError(
            f"upstream shape {upstream.shape} differs from output shape {z.shape}"
        )
    g = activation_apply(z, spec.activation, "backward", upstream)
    return _affine_backward(x, g, state, spec)


def conv2d_apply(x, state, spec):
    """Valid cross-correlation with stride, plus bias, then activation."""
    return _layer_apply(x, state, spec, "conv")


def conv2d_grad(x, upstream, state, spec):
    """Gradient w.r.t. ``x`` of :func:`conv2d_apply`; accumulates parameter grads."""
    return _layer_grad(x, upstream, state, spec, "conv")


def tconv2d_apply(x, state, spec):
    """Transposed convolution (adjoint of the strided valid convolution)."""
    return _layer_apply(x, state, spec, "tconv")


def tconv2d_grad(x, upstream, state, spec):
    return _layer_grad(x, upstream, state, spec, "tconv")


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise DimensionError(f"pred shape {pred.shape} differs from target {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    return loss, (2.0 / diff.size) * diff


# ---------------------------------------------------------------------------
# Layers and models
# ---------------------------------------------------------------------------

class Layer:
    """A layer spec bound to its parameters, caching activations for backprop."""

    def __init__(self, spec: ConvLayerSpec, state: LayerState):
        self.spec = spec
        self.state = state
        self._cache = None

    @classmethod
    def create(cls, spec: ConvLayerSpec, in_channels: int, rng, dtype=np.float32):
        state = LayerState.initialize(
            spec.n_filters, in_channels, spec.kernel_h, spec.kernel_w, rng, dtype
        )
        return cls(spec, state)

    @property
    def in_channels(self) -> int:
        return self.state.weights.shape[1]

    def forward(self, x, keep=False):
        z = _affine_forward(x, self.state, self.spec)
        if keep:
            self._cache = (x, z)
        return activation_apply(z, self.spec.activation)

    def backward(self, upstream):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        x, z = self._cache
        self._cache = None
        g = activation_apply(z, self.spec.activation, "backward", upstream)
        return _affine_backward(x, g, self.state, self.spec)


class Sequential:
    """Ordered stack of :class:`Layer` objects."""

    def __init__(self, layers):
        self.layers = list(layers)

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    @property
    def states(self):
        return [layer.state for layer in self.layers]

    @property
    def dtype(self):
        return self.layers[0].state.weights.dtype

    def num_parameters(self) -> int:
        return sum(st.size for st in self.states)

    def forward(self, x, keep=False):
        for layer in self.layers:
            x = layer.forward(x, keep=keep)
        return x

    def backward(self, upstream):
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream

    def zero_grad(self):
        for st in self.states:
            st.zero_grad()

    def astype(self, dtype) -> Sequential:
        return Sequential(Layer(l.spec, l.state.astype(dtype)) for l in self.layers)

    def copy(self) -> Sequential:
        return copy.deepcopy(self)

    def output_shape(self, shape):
        """Shape ``(c, h, w)`` produced for an input of shape ``(c, h, w)``."""
        c, h, w = shape
        for layer in self.layers:
            if c != layer.in_channels:
                raise DimensionError(
                    f"layer expects {layer.in_channels} channels, got shape {(c, h, w)}"
                )
            h, w = layer.spec.output_hw(h, w)
            c = layer.spec.n_filters
        return c, h, w


def adam_step(states, cfg: AdamConfig):
    """One bias-corrected Adam update over every state, then zero the gradients."""
    for st in states:
        st.step_count += 1
        t = st.step_count
        c1 = 1.0 - cfg.beta1**t
        c2 = 1.0 - cfg.beta2**t
        for p, g, m, v in zip(st.params, st.grads, st.adam_m, st.adam_v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= (cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)).astype(p.dtype)
        st.zero_grad()


def _relu_pattern(model: Sequential, x):
    """Output of ``model`` plus the on/off pattern of every relu unit."""
    masks = []
    for layer in model.layers:
        z = _affine_forward(x, layer.state, layer.spec)
        if layer.spec.activation == "relu":
            masks.append((z > 0).reshape(-1))
        x = activation_apply(z, layer.spec.activation)
    pattern = np.concatenate(masks) if masks else np.zeros(0, bool)
    return x, pattern


def compare_gradients(model: Sequential, x, target, eps=1e-4, max_params=20000, return_kinks=False):
    """Backprop and central-difference gradients of the MSE loss, in float64.

    Returns two flat arrays ``(analytic, numeric)`` over every parameter in
    layer order (weights then bias). With ``return_kinks`` a third boolean
    array marks parameters whose +-eps perturbation flips a relu unit, where
    the loss is not differentiable inside the difference window.
    """
    model = model.astype(np.float64)
    if model.num_parameters() > max_params:
        raise ConfigurationError(
            f"model has {model.num_parameters()} parameters, above the limit {max_params}"
        )
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    def loss_at():
        out, pattern = _relu_pattern(model, x)
        value, _ = mse_loss(out, target)
        if not np.isfinite(value):
            raise NumericError("loss is not finite during gradient check")
        return value, pattern

    model.zero_grad()
    loss, grad = mse_loss(model.forward(x, keep=True), target)
    if not np.isfinite(loss):
        raise NumericError("loss is not finite during gradient check")
    model.backward(grad)
    _, base = _relu_pattern(model, x)

    analytic, numeric, kinks = [], [], []
    for st in model.states:
        for p, g in zip(st.params, st.grads):
            flat = p.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up, up_pattern = loss_at()
                flat[i] = orig - eps
                down, down_pattern = loss_at()
                flat[i] = orig
                numeric.append((up - down) / (2 * eps))
                kinks.append(not (np.array_equal(up_pattern, base) and np.array_equal(down_pattern, base)))
            analytic.append(g.reshape(-1).copy())
    out = (np.concatenate(analytic), np.array(numeric))
    return out + (np.array(kinks, dtype=bool),) if return_kinks else out


def gradient_check(model: Sequential, x, target, eps=1e-4, max_params=20000, floor=1e-7,
                   skip_kinks=False):
    """Largest relative error between backprop and central-difference gradients.

    Per parameter the error is ``|a - f| / max(|a|, |f|, floor)``.
    ``skip_kinks`` leaves out parameters whose perturbation crosses a relu kink.
    """
    analytic, numeric, kinks = compare_gradients(model, x, target, eps, max_params, return_kinks=True)
    if skip_kinks:
        analytic, numeric = analytic[~kinks], numeric[~kinks]
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_weights(model: Sequential, path):
    """Write ``model`` in the little-endian ``SEMW`` layout."""
    for st in model.states:
        if not (np.all(np.isfinite(st.weights)) and np.all(np.isfinite(st.bias))):
            raise NumericError("refusing to save non-finite weights")
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(model))]
    for layer in model:
        spec, w = layer.spec, layer.state.weights
        parts.append(struct.pack("<BB", _KIND_TAG[spec.kind], _ACT_TAG[spec.activation]))
        parts.append(struct.pack("<5I", *w.shape, spec.stride))
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.state.bias, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path) -> Sequential:
    data = Path(path).read_bytes()
    pos = 0

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(data):
            raise FormatError(f"file truncated while reading {what}", pos)
        chunk = data[pos : pos + nbytes]
        pos += nbytes
        return chunk

    if take(4, "magic") != WEIGHTS_MAGIC:
        raise FormatError("bad magic bytes, expected b'SEMW'", 0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    kinds = {v: k for k, v in _KIND_TAG.items()}
    acts = {v: k for k, v in _ACT_TAG.items()}
    layers = []
    for _ in range(count):
        start = pos
        kind_tag, act_tag = struct.unpack("<BB", take(2, "layer tags"))
        if kind_tag not in kinds or act_tag not in acts:
            raise FormatError(f"unknown layer tags ({kind_tag}, {act_tag})", start)
        out_c, in_c, kh, kw, stride = struct.unpack("<5I", take(20, "layer dims"))
        try:
            spec = ConvLayerSpec(out_c, kh, kw, stride, kinds[kind_tag], acts[act_tag])
        except ConfigurationError as exc:
            raise FormatError(str(exc), start) from None
        nw = out_c * in_c * kh * kw
        w = np.frombuffer(take(4 * nw, "weights"), dtype="<f4").reshape(out_c, in_c, kh, kw)
        b = np.frombuffer(take(4 * out_c, "bias"), dtype="<f4")
        state = LayerState(weights=w.astype(np.float32), bias=b.astype(np.float32))
        layers.append(Layer(spec, state))
    if pos != len(data):
        raise FormatError("trailing bytes after last layer", pos)
    return Sequential(layers)
