"""
Checking convolution gradients by finite differences
====================================================

Every layer of the auto-encoder is a strided convolution or its transpose.
Backprop is compared against central differences in double precision, and
the transposed convolution is checked to be the exact adjoint of the
forward convolution.
"""

import numpy as np

from semantic_ic import nncore
from semantic_ic.nncore import ConvLayerSpec, Layer, Sequential

rng = np.random.default_rng(0)

###############################################################################
# A two-layer stack mixing both kinds, on a 12x12 input.
model = Sequential([
    Layer.create(ConvLayerSpec(5, 4, 4, 2, "conv", "relu"), 3, rng, np.float64),
    Layer.create(ConvLayerSpec(3, 4, 4, 2, "tconv", "sigmoid"), 5, rng, np.float64),
])
x = rng.standard_normal((1, 3, 12, 12))
out_shape = model.output_shape((3, 12, 12))
target = rng.random((1, *out_shape))
print("parameters:", model.num_parameters(), " output:", out_shape)

analytic, numeric, kinks = nncore.compare_gradients(model, x, target, return_kinks=True)
print("max |analytic - numeric|:", np.abs(analytic - numeric).max())
print("max relative error:", nncore.gradient_check(model, x, target, skip_kinks=True))
print("perturbations crossing a relu kink:", kinks.sum())

###############################################################################
# Adjoint identity <conv(x), y> = <x, tconv(y)> with shared weights and no bias.
spec = ConvLayerSpec(4, 3, 3, 2, "conv", "none")
state = nncore.LayerState.initialize(4, 3, 3, 3, rng, np.float64)
a = rng.standard_normal((2, 3, 11, 11))
fa = nncore.conv2d_apply(a, state, spec)
b = rng.standard_normal(fa.shape)
t_state = nncore.LayerState(state.weights.swapaxes(0, 1).copy(), np.zeros(3))
tb = nncore.tconv2d_apply(b, t_state, ConvLayerSpec(3, 3, 3, 2, "tconv", "none"))
print("adjoint gap:", abs(np.vdot(fa, b) - np.vdot(a, tb)))
