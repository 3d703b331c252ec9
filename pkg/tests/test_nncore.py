import numpy as np
import pytest

from semantic_ic import nncore
from semantic_ic.autoencoder import DEFAULT_DECODER, DEFAULT_ENCODER
from semantic_ic.errors import DimensionError, FormatError
from semantic_ic.nncore import (
    AdamConfig,
    ConvLayerSpec,
    Layer,
    LayerState,
    Sequential,
    activation_apply,
    adam_step,
    compare_gradients,
    conv2d_apply,
    conv2d_grad,
    gradient_check,
    mse_loss,
    tconv2d_apply,
    tconv2d_grad,
)


def make_model(specs, in_c, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    layers = []
    for spec in specs:
        layers.append(Layer.create(spec, in_c, rng, dtype))
        in_c = spec.n_filters
    return Sequential(layers)


def identity_state(dtype=np.float64):
    return LayerState(np.ones((1, 1, 1, 1), dtype), np.zeros(1, dtype))


def fd_input_grad(f, x, upstream, eps=1e-4):
    """Central differences of <f(x), upstream> w.r.t. every entry of x."""
    x = x.copy()
    out = np.zeros_like(x)
    flat, gflat = x.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = np.sum(f(x) * upstream)
        flat[i] = orig - eps
        down = np.sum(f(x) * upstream)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return out


def max_rel(a, b, floor=1e-7):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


class TestShapes:
    def test_first_encoder_layer(self):
        spec = ConvLayerSpec(27, 4, 4, 2, "conv")
        st = LayerState.initialize(27, 3, 4, 4, np.random.default_rng(0))
        out = conv2d_apply(np.zeros((1, 3, 96, 96), np.float32), st, spec)
        assert out.shape == (1, 27, 47, 47)

    def test_encoder_stack_gives_latent(self):
        model = make_model(DEFAULT_ENCODER, 3, dtype=np.float32)
        assert model.forward(np.zeros((1, 3, 96, 96), np.float32)).shape == (1, 16, 23, 23)

    def test_tconv_first_decoder_layer(self):
        spec = ConvLayerSpec(27, 3, 3, 2, "tconv")
        st = LayerState.initialize(27, 16, 3, 3, np.random.default_rng(0))
        assert tconv2d_apply(np.zeros((1, 16, 23, 23)), st, spec).shape == (1, 27, 47, 47)

    def test_decoder_stack_restores_input(self):
        model = make_model(DEFAULT_DECODER, 16, dtype=np.float32)
        assert model.forward(np.zeros((1, 16, 23, 23), np.float32)).shape == (1, 3, 96, 96)

    def test_round_trip_dimensions(self):
        model = make_model(DEFAULT_ENCODER + DEFAULT_DECODER, 3)
        dims = [(96, 96)]
        h, w = 96, 96
        for layer in model:
            h, w = layer.spec.output_hw(h, w)
            dims.append((h, w))
        assert [d[0] for d in dims] == [96, 47, 23, 47, 96]

    def test_channel_mismatch_names_both_shapes(self):
        spec = ConvLayerSpec(2, 3, 3, 1)
        st = LayerState.initialize(2, 3, 3, 3, np.random.default_rng(0))
        with pytest.raises(DimensionError, match=r"\(1, 4, 5, 5\).*\(2, 3, 3, 3\)"):
            conv2d_apply(np.zeros((1, 4, 5, 5)), st, spec)

    def test_input_smaller_than_kernel(self):
        spec = ConvLayerSpec(1, 3, 3, 1)
        st = LayerState.initialize(1, 1, 3, 3, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            conv2d_apply(np.zeros((1, 1, 2, 2)), st, spec)


class TestIdentityKernels:
    def test_conv_identity(self):
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        out = conv2d_apply(x, identity_state(), ConvLayerSpec(1, 1, 1, 1, "conv", "none"))
        np.testing.assert_array_equal(out, x)

    def test_tconv_identity(self):
        x = np.arange(9.0).reshape(1, 1, 3, 3)
        out = tconv2d_apply(x, identity_state(), ConvLayerSpec(1, 1, 1, 1, "tconv", "none"))
        np.testing.assert_array_equal(out, x)

    @pytest.mark.parametrize("kind", ["conv", "tconv"])
    def test_identity_grad_is_upstream(self, kind):
        x = np.random.default_rng(1).standard_normal((1, 1, 3, 3))
        g = np.random.default_rng(2).standard_normal((1, 1, 3, 3))
        grad = conv2d_grad if kind == "conv" else tconv2d_grad
        out = grad(x, g, identity_state(), ConvLayerSpec(1, 1, 1, 1, kind, "none"))
        np.testing.assert_array_equal(out, g)

    @pytest.mark.parametrize("kind", ["conv", "tconv"])
    def test_zero_upstream(self, kind):
        rng = np.random.default_rng(3)
        spec = ConvLayerSpec(2, 3, 3, 2, kind, "relu")
        st = LayerState.initialize(2, 2, 3, 3, rng, np.float64)
        x = rng.standard_normal((1, 2, 5, 5))
        apply, grad = (conv2d_apply, conv2d_grad) if kind == "conv" else (tconv2d_apply, tconv2d_grad)
        up = np.zeros_like(apply(x, st, spec))
        dx = grad(x, up, st, spec)
        assert not dx.any() and not st.grad_weights.any() and not st.grad_bias.any()

    def test_upstream_shape_checked(self):
        spec = ConvLayerSpec(1, 3, 3, 1)
        st = LayerState.initialize(1, 1, 3, 3, np.random.default_rng(0), np.float64)
        with pytest.raises(DimensionError):
            conv2d_grad(np.zeros((1, 1, 5, 5)), np.zeros((1, 1, 4, 4)), st, spec)


class TestFiniteDifferences:
    @pytest.mark.parametrize("activation", ["none", "relu", "sigmoid"])
    def test_conv_input_gradient(self, activation):
        rng = np.random.default_rng(10)
        spec = ConvLayerSpec(3, 3, 3, 1, "conv", activation)
        st = LayerState.initialize(3, 2, 3, 3, rng, np.float64)
        st.bias[:] = rng.standard_normal(3) * 0.1
        x = rng.standard_normal((1, 2, 5, 5))
        up = rng.standard_normal(conv2d_apply(x, st, spec).shape)
        analytic = conv2d_grad(x, up, st, spec)
        numeric = fd_input_grad(lambda v: conv2d_apply(v, st, spec), x, up)
        assert max_rel(analytic, numeric) < 1e-3

    @pytest.mark.parametrize("activation", ["none", "relu", "sigmoid"])
    def test_tconv_input_gradient(self, activation):
        rng = np.random.default_rng(11)
        spec = ConvLayerSpec(3, 3, 3, 2, "tconv", activation)
        st = LayerState.initialize(3, 2, 3, 3, rng, np.float64)
        x = rng.standard_normal((1, 2, 4, 4))
        up = rng.standard_normal(tconv2d_apply(x, st, spec).shape)
        analytic = tconv2d_grad(x, up, st, spec)
        numeric = fd_input_grad(lambda v: tconv2d_apply(v, st, spec), x, up)
        assert max_rel(analytic, numeric) < 1e-3

    @pytest.mark.parametrize(
        "specs,shape",
        [
            ([ConvLayerSpec(3, 3, 3, 1, "conv", "relu")], (1, 2, 5, 5)),
            ([ConvLayerSpec(3, 3, 3, 2, "tconv", "sigmoid")], (1, 2, 4, 4)),
            ([ConvLayerSpec(4, 2, 3, 2, "conv", "sigmoid"), ConvLayerSpec(2, 2, 3, 2, "tconv", "none")], (2, 3, 7, 9)),
        ],
    )
    def test_parameter_gradients(self, specs, shape):
        rng = np.random.default_rng(12)
        model = make_model(specs, shape[1], seed=5)
        x = rng.standard_normal(shape)
        target = rng.standard_normal(model.forward(x).shape)
        assert nncore.gradient_check(model, x, target) < 1e-3

    def test_linear_model_is_exact(self):
        rng = np.random.default_rng(13)
        model = make_model([ConvLayerSpec(2, 1, 1, 1, "conv", "none")], 3, seed=1)
        x = rng.standard_normal((1, 3, 4, 4))
        target = rng.standard_normal((1, 2, 4, 4))
        assert nncore.gradient_check(model, x, target) < 1e-6

    def test_default_encoder_on_crop(self):
        rng = np.random.default_rng(14)
        model = make_model(DEFAULT_ENCODER, 3, seed=2)
        x = rng.random((1, 3, 12, 12))
        target = rng.random(model.forward(x).shape)
        assert nncore.gradient_check(model, x, target) < 1e-3

    def test_zero_relu_model(self):
        # central differences straddle the relu kink at 0 and read h/2 there;
        # the analytic gradient is exactly zero
        model = make_model([ConvLayerSpec(2, 3, 3, 1, "conv", "relu")], 1)
        x = np.zeros((1, 1, 5, 5))
        analytic, numeric = nncore.compare_gradients(model, x, np.zeros((1, 2, 3, 3)))
        assert not analytic.any()
        assert np.max(np.abs(numeric)) <= 1e-4

    def test_parameter_limit(self):
        model = make_model(DEFAULT_ENCODER + DEFAULT_DECODER, 3)
        with pytest.raises(Exception):
            nncore.gradient_check(model, np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 8)), max_params=5000)


def test_adjoint_property():
    rng = np.random.default_rng(20)
    for kh, kw, s, h, w in [(3, 4, 2, 11, 12), (4, 4, 2, 96, 96), (3, 3, 1, 6, 7), (2, 3, 3, 8, 9)]:
        V = rng.standard_normal((5, 3, kh, kw))
        conv = (LayerState(V, np.zeros(5)), ConvLayerSpec(5, kh, kw, s, "conv", "none"))
        tconv = (LayerState(V.swapaxes(0, 1).copy(), np.zeros(3)), ConvLayerSpec(3, kh, kw, s, "tconv", "none"))
        x = rng.standard_normal((2, 3, h, w))
        cx = conv2d_apply(x, *conv)
        y = rng.standard_normal(cx.shape)
        ty = tconv2d_apply(y, *tconv)
        lhs = np.sum(cx * y)
        rhs = np.sum(x[:, :, : ty.shape[2], : ty.shape[3]] * ty)
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), 1.0)


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(activation_apply(np.array([-1.0, 0.0, 2.0]), "relu"), [0, 0, 2])

    def test_sigmoid_at_zero(self):
        assert activation_apply(np.array([0.0]), "sigmoid")[0] == 0.5

    def test_sigmoid_backward_at_zero(self):
        g = activation_apply(np.array([0.0]), "sigmoid", "backward", np.array([1.0]))
        assert g[0] == pytest.approx(0.25)

    def test_sigmoid_extremes_are_finite(self):
        y = activation_apply(np.array([-1000.0, 1000.0]), "sigmoid")
        np.testing.assert_array_equal(y, [0.0, 1.0])


class TestMSE:
    def test_equal(self):
        x = np.ones((1, 1, 2, 2))
        loss, grad = mse_loss(x, x)
        assert loss == 0 and not grad.any()

    def test_constant_offset(self):
        loss, grad = mse_loss(np.ones((1, 1, 2, 5)), np.zeros((1, 1, 2, 5)))
        assert loss == 1.0
        np.testing.assert_allclose(grad, 0.2)

    def test_single_element(self):
        loss, grad = mse_loss(np.full((1, 1, 1, 1), 3.0), np.ones((1, 1, 1, 1)))
        assert loss == 4.0 and grad.item() == 4.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


class TestAdam:
    def test_zero_gradient_noop(self):
        st = LayerState.initialize(2, 1, 3, 3, np.random.default_rng(0), np.float64)
        before = st.weights.copy()
        adam_step([st], AdamConfig())
        np.testing.assert_array_equal(st.weights, before)
        assert st.step_count == 1

    def test_first_step_magnitude(self):
        st = LayerState(np.zeros((1, 1, 1, 1)), np.zeros(1))
        g = 0.37
        st.grad_weights[...] = g
        cfg = AdamConfig(learning_rate=0.003)
        adam_step([st], cfg)
        # bias-corrected m/sqrt(v) is g/|g| on the first step
        expected = cfg.learning_rate * g / (abs(g) + cfg.epsilon)
        assert st.weights.item() == pytest.approx(-expected, rel=1e-12)
        assert not st.grad_weights.any()

    def test_two_steps_reduce_quadratic(self):
        st = LayerState(np.ones((1, 1, 1, 1)), np.zeros(1))
        losses = []
        for _ in range(2):
            w = st.weights.item()
            losses.append(w * w)
            st.grad_weights[...] = 2 * w
            adam_step([st], AdamConfig(learning_rate=0.1))
        losses.append(st.weights.item() ** 2)
        assert losses[0] > losses[1] > losses[2]

    def test_gradients_zeroed(self):
        st = LayerState.initialize(2, 1, 3, 3, np.random.default_rng(0), np.float64)
        st.grad_weights[...] = 1.0
        st.grad_bias[...] = 1.0
        adam_step([st], AdamConfig())
        assert not st.grad_weights.any() and not st.grad_bias.any()


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        model = make_model(DEFAULT_ENCODER + DEFAULT_DECODER, 3, dtype=np.float32)
        path = tmp_path / "w.semw"
        nncore.save_weights(model, path)
        loaded = nncore.load_weights(path)
        assert [l.spec for l in loaded] == [l.spec for l in model]
        for a, b in zip(model.states, loaded.states):
            assert a.weights.tobytes() == b.weights.tobytes()
            assert a.bias.tobytes() == b.bias.tobytes()

    def test_default_size(self, tmp_path):
        model = make_model(DEFAULT_ENCODER + DEFAULT_DECODER, 3, dtype=np.float32)
        assert model.num_parameters() == 10441 == 386 * 27 + 19
        path = tmp_path / "w.semw"
        nncore.save_weights(model, path)
        header = 4 + 8 + 4 * (2 + 20)
        assert path.stat().st_size == header + 4 * 10441

    def test_header_layout(self, tmp_path):
        model = make_model([ConvLayerSpec(2, 3, 1, 2, "tconv", "sigmoid")], 4, dtype=np.float32)
        path = tmp_path / "w.semw"
        nncore.save_weights(model, path)
        raw = path.read_bytes()
        assert raw[:4] == b"SEMW"
        assert raw[4:12] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little")
        assert raw[12:14] == bytes([1, 2])
        dims = [int.from_bytes(raw[14 + 4 * i : 18 + 4 * i], "little") for i in range(5)]
        assert dims == [2, 4, 3, 1, 2]
        w = np.frombuffer(raw[34 : 34 + 4 * 24], "<f4")
        np.testing.assert_array_equal(w, model.states[0].weights.reshape(-1))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.semw"
        nncore.save_weights(make_model(DEFAULT_ENCODER, 3, dtype=np.float32), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            nncore.load_weights(path)
        assert err.value.offset == 0

    def test_truncated(self, tmp_path):
        path = tmp_path / "w.semw"
        nncore.save_weights(make_model(DEFAULT_ENCODER, 3, dtype=np.float32), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])
        with pytest.raises(FormatError, match="truncated"):
            nncore.load_weights(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "w.semw"
        nncore.save_weights(make_model(DEFAULT_ENCODER, 3, dtype=np.float32), path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            nncore.load_weights(path)
        assert err.value.offset == 4


def test_kink_crossings_are_flagged():
    spec = ConvLayerSpec(1, 1, 1, 1, "conv", "relu")
    model = Sequential([Layer.create(spec, 1, np.random.default_rng(0), np.float64)])
    model.layers[0].state.weights[:] = 1.0
    model.layers[0].state.bias[:] = 0.0
    x = np.array([[[[1.0, -2.0], [0.5e-4, 3.0]]]])  # one pre-activation inside the eps window
    target = np.zeros((1, 1, 2, 2))
    _, _, kinks = compare_gradients(model, x, target, return_kinks=True)
    # the bias shifts that unit by eps and crosses 0; the weight shifts it by x*eps only
    assert kinks.tolist() == [False, True]
    x[0, 0, 1, 0] = 0.5
    _, _, kinks = compare_gradients(model, x, target, return_kinks=True)
    assert not kinks.any()
    assert gradient_check(model, x, target) == gradient_check(model, x, target, skip_kinks=True)
