import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazeconv.errors import ConfigurationError, LabelError, LengthError, ShapeError
from gazeconv.tensor import (ConvLayer, OptimConfig, Tensor, add, avg_pool_halve, channel_slice, conv1d_backward,
                             conv1d_forward, kl_standard_normal, l1_loss, l2_loss, optimizer_step, relu,
                             reparameterize, scale, softmax, softmax_cross_entropy, upsample_double)
from helpers import check_gradients, naive_conv1d


def random_layer(rng, in_depth, out_depth, k):
    return ConvLayer(in_depth, out_depth, k, weight=rng.normal(size=(out_depth, in_depth, k)),
                     bias=rng.normal(size=out_depth))


# --- conv1d_forward ---------------------------------------------------------


def test_conv_one_tap_is_scalar_multiply():
    layer = ConvLayer(1, 1, 1, weight=[[[2.0]]], bias=[0.0])
    out = conv1d_forward(Tensor([[1.0, 2.0, 3.0]]), layer, "same")
    np.testing.assert_array_equal(out.values, [[2.0, 4.0, 6.0]])


def test_conv_zero_input_gives_bias(rng):
    layer = random_layer(rng, 3, 4, 5)
    out = conv1d_forward(Tensor(np.zeros((3, 11))), layer)
    np.testing.assert_array_equal(out.values, np.repeat(layer.bias[:, None], 11, axis=1))


def test_conv_matches_naive_oracle(rng):
    layer = random_layer(rng, 3, 4, 7)
    x = rng.normal(size=(3, 17))
    for padding in ("same", "valid"):
        out = conv1d_forward(Tensor(x), layer, padding)
        np.testing.assert_allclose(out.values, naive_conv1d(x, layer.weight, layer.bias, padding), rtol=0, atol=1e-10)


def test_conv_batched_equals_per_item(rng):
    layer = random_layer(rng, 3, 2, 4)
    x = rng.normal(size=(5, 3, 9))
    batched = conv1d_forward(Tensor(x), layer).values
    for i in range(5):
        np.testing.assert_allclose(batched[i], conv1d_forward(Tensor(x[i]), layer).values, atol=1e-12)


@given(k=st.integers(1, 12), h=st.integers(1, 40))
def test_same_padding_preserves_height(k, h):
    layer = ConvLayer(2, 3, k)
    assert conv1d_forward(Tensor(np.ones((2, h))), layer, "same").height == h


def test_valid_padding_height_and_length_error(rng):
    layer = random_layer(rng, 1, 1, 5)
    assert conv1d_forward(Tensor(np.ones((1, 9))), layer, "valid").height == 5
    with pytest.raises(LengthError):
        conv1d_forward(Tensor(np.ones((1, 4))), layer, "valid")


def test_conv_depth_mismatch():
    with pytest.raises(ShapeError):
        conv1d_forward(Tensor(np.ones((2, 5))), ConvLayer(3, 1, 2))


# --- conv1d_backward --------------------------------------------------------


def test_conv_backward_zero_upstream(rng):
    layer = random_layer(rng, 2, 3, 3)
    x = Tensor(rng.normal(size=(2, 6)))
    gin = conv1d_backward(x, layer, np.zeros((3, 6)))
    assert not gin.values.any()
    assert not layer.weight_grad.any() and not layer.bias_grad.any()


def test_conv_backward_one_tap_transpose(rng):
    w = rng.normal(size=(2, 3, 1))
    layer = ConvLayer(3, 2, 1, weight=w)
    g = rng.normal(size=(2, 5))
    gin = conv1d_backward(Tensor(rng.normal(size=(3, 5))), layer, g)
    np.testing.assert_allclose(gin.values, w[:, :, 0].T @ g, atol=1e-12)


def test_conv_backward_shape_mismatch(rng):
    layer = random_layer(rng, 2, 3, 3)
    with pytest.raises(ShapeError):
        conv1d_backward(Tensor(np.ones((2, 6))), layer, np.ones((3, 5)))


@pytest.mark.parametrize("padding", ["same", "valid"])
@pytest.mark.parametrize("seed", range(4))
def test_conv_gradients_finite_differences(seed, padding):
    rng = np.random.default_rng(seed)
    d, o, k = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
    h = int(rng.integers(k, k + 6))
    layer = random_layer(rng, d, o, k)
    check_gradients(lambda x: conv1d_forward(x, layer, padding), [rng.normal(size=(d, h))], [layer], rng)


# --- relu / pooling / upsampling -----------------------------------------------


def test_relu_definition():
    np.testing.assert_array_equal(relu(Tensor([[-1.0, 0.0, 2.0]])).values, [[0.0, 0.0, 2.0]])
    x = Tensor([[0.5, 1.0, 3.0]])
    np.testing.assert_array_equal(relu(x).values, x.values)


def test_relu_gradient_at_zero_is_zero():
    x = Tensor([[0.0, 1.0]])
    relu(x).backward(np.ones((1, 2)))
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0]])


def test_relu_gradient_away_from_kink(rng):
    x = rng.normal(size=(3, 10))
    x = np.where(np.abs(x) < 1e-3, 0.5, x)
    check_gradients(relu, [x], rng=rng)


def test_avg_pool_values():
    np.testing.assert_array_equal(avg_pool_halve(Tensor([[2.0, 4, 6, 8]])).values, [[3.0, 7.0]])
    np.testing.assert_array_equal(avg_pool_halve(Tensor([[1.0, 1, 1, 1, 1]])).values, [[1.0, 1.0]])
    with pytest.raises(LengthError):
        avg_pool_halve(Tensor([[1.0]]))


def test_avg_pool_gradients(rng):
    check_gradients(avg_pool_halve, [rng.normal(size=(2, 7))], rng=rng)


def test_upsample_values_and_pool_inverse(rng):
    np.testing.assert_array_equal(upsample_double(Tensor([[1.0, 2.0]])).values, [[1.0, 1.0, 2.0, 2.0]])
    pairs = np.repeat(rng.normal(size=(3, 6)), 2, axis=1)
    np.testing.assert_array_equal(upsample_double(avg_pool_halve(Tensor(pairs))).values, pairs)


def test_upsample_gradients(rng):
    check_gradients(upsample_double, [rng.normal(size=(2, 5))], rng=rng)


def test_channel_slice_and_add_gradients(rng):
    check_gradients(lambda x: channel_slice(x, 1, 3), [rng.normal(size=(4, 5))], rng=rng)
    check_gradients(lambda a, b: add(scale(a, 3.0), b), [rng.normal(size=(2, 3)), rng.normal(size=(2, 3))], rng=rng)


# --- losses -----------------------------------------------------------------


def test_uniform_logits_give_log_c():
    for c in (2, 5):
        loss = softmax_cross_entropy(Tensor(np.zeros((c, 7))), np.zeros(7, dtype=int))
        assert loss.item() == pytest.approx(math.log(c), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_softmax_columns_sum_to_one(seed):
    z = np.random.default_rng(seed).normal(scale=30, size=(5, 9))
    p = softmax(z)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)


def test_softmax_cross_entropy_gradient(rng):
    labels = rng.integers(0, 4, size=(2, 6))
    w = rng.uniform(0.5, 2.0, size=4)
    check_gradients(lambda z: softmax_cross_entropy(z, labels, w), [rng.normal(size=(2, 4, 6))], rng=rng)


def test_softmax_cross_entropy_label_error():
    with pytest.raises(LabelError):
        softmax_cross_entropy(Tensor(np.zeros((3, 2))), [0, 3])


def test_uniform_weights_reduce_to_plain_cross_entropy(rng):
    z = rng.normal(size=(5, 8))
    y = rng.integers(0, 5, size=8)
    a = softmax_cross_entropy(Tensor(z), y, np.ones(5)).item()
    b = softmax_cross_entropy(Tensor(z), y).item()
    p = softmax(z)
    assert a == b == pytest.approx(-np.mean(np.log(p[y, np.arange(8)])), abs=1e-12)


def test_l1_l2_identity_and_constant_offset(rng):
    x = rng.normal(size=(3, 6))
    assert l2_loss(Tensor(x), Tensor(x)).item() == 0.0
    assert l1_loss(Tensor(x), Tensor(x)).item() == 0.0
    c = -0.75
    assert l2_loss(Tensor(x + c), Tensor(x)).item() == pytest.approx(c * c, abs=1e-12)
    assert l1_loss(Tensor(x + c), Tensor(x)).item() == pytest.approx(abs(c), abs=1e-12)
    with pytest.raises(ShapeError):
        l2_loss(Tensor(x), Tensor(x[:, :3]))


def test_l1_l2_gradients(rng):
    target = rng.normal(size=(3, 5))
    pred = target + rng.normal(size=(3, 5))
    pred = np.where(np.abs(pred - target) < 1e-3, target + 0.5, pred)
    check_gradients(lambda p: l2_loss(p, Tensor(target)), [pred], rng=rng)
    check_gradients(lambda p: l1_loss(p, Tensor(target)), [pred], rng=rng)


def test_kl_closed_forms(rng):
    z = Tensor(np.zeros((1, 4)))
    assert kl_standard_normal(z, Tensor(np.zeros((1, 4)))).item() == 0.0
    assert kl_standard_normal(Tensor([[1.0]]), Tensor([[0.0]])).item() == pytest.approx(0.5, abs=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_kl_is_non_negative(seed):
    r = np.random.default_rng(seed)
    m = r.normal(scale=3, size=(1, 5))
    lv = r.normal(scale=3, size=(1, 5))
    assert kl_standard_normal(Tensor(m), Tensor(lv)).item() >= 0.0


def test_kl_gradient(rng):
    check_gradients(kl_standard_normal, [rng.normal(size=(1, 6)), rng.normal(size=(1, 6))], rng=rng)


# --- reparameterize ----------------------------------------------------------


def test_reparameterize_collapses_at_tiny_variance(rng):
    mean = rng.normal(size=(1, 8))
    z = reparameterize(Tensor(mean), Tensor(np.full((1, 8), -50.0)), rng)
    np.testing.assert_allclose(z.values, mean, atol=1e-10)


def test_reparameterize_gradient_with_frozen_noise(rng):
    noise = rng.normal(size=(1, 7))
    check_gradients(lambda m, lv: reparameterize(m, lv, noise=noise),
                    [rng.normal(size=(1, 7)), rng.normal(size=(1, 7))], rng=rng)


def test_reparameterize_needs_noise_source():
    with pytest.raises(ConfigurationError):
        reparameterize(Tensor(np.zeros((1, 2))), Tensor(np.zeros((1, 2))))


# --- optimizer ---------------------------------------------------------------


def _single_weight(w=1.0, g=1.0):
    layer = ConvLayer(1, 1, 1, weight=[[[w]]], bias=[0.0])
    layer.weight_grad[...] = g
    layer.has_grad = True
    return layer


def test_sgd_vanilla_step():
    layer = _single_weight()
    optimizer_step([layer], OptimConfig("sgd_momentum", 0.1, weight_decay=0.0, momentum=0.0))
    assert layer.weight[0, 0, 0] == pytest.approx(0.9)
    assert not layer.weight_grad.any()


def test_zero_lr_leaves_weights(rng):
    layer = random_layer(rng, 2, 2, 3)
    before = layer.weight.copy()
    layer.weight_grad[...] = 1.0
    layer.has_grad = True
    cfg = OptimConfig("adam", 1e-3)
    optimizer_step([layer], cfg, learning_rate=0.0)
    np.testing.assert_array_equal(layer.weight, before)


def test_step_without_gradients_is_noop(rng):
    layer = random_layer(rng, 2, 2, 3)
    layer.weight_velocity[...] = 1.0
    before = layer.weight.copy()
    optimizer_step([layer], OptimConfig("sgd_momentum", 0.1))
    np.testing.assert_array_equal(layer.weight, before)


def test_weight_decay_skips_bias():
    layer = ConvLayer(1, 1, 1, weight=[[[2.0]]], bias=[2.0])
    layer.has_grad = True
    optimizer_step([layer], OptimConfig("sgd_momentum", 0.1, weight_decay=0.5, momentum=0.0))
    assert layer.weight[0, 0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)
    assert layer.bias[0] == 2.0


@pytest.mark.parametrize("kind,lr,steps", [("sgd_momentum", 0.1, 50), ("adam", 0.1, 300)])
def test_converges_on_convex_scalar(kind, lr, steps):
    layer = ConvLayer(1, 1, 1, weight=[[[0.0]]])
    cfg = OptimConfig(kind, lr, momentum=0.0 if kind == "sgd_momentum" else 0.9)
    for _ in range(steps):
        w = layer.weight[0, 0, 0]
        layer.weight_grad[...] = 2 * (w - 3.0)
        layer.has_grad = True
        optimizer_step([layer], cfg)
    assert abs(layer.weight[0, 0, 0] - 3.0) < 1e-3


def test_adam_first_step_has_lr_magnitude():
    layer = _single_weight(w=1.0, g=5.0)
    optimizer_step([layer], OptimConfig("adam", 0.01))
    assert layer.weight[0, 0, 0] == pytest.approx(1.0 - 0.01, rel=1e-6)


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0.0), dict(momentum=1.0), dict(beta2=-0.1),
                                    dict(epsilon=0.0), dict(kind="rmsprop")])
def test_optim_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        OptimConfig(**kwargs)


def test_optimizer_state_matches_parameter_shapes(rng):
    layer = random_layer(rng, 3, 4, 5)
    for name in ("weight_velocity", "weight_m", "weight_v", "weight_grad"):
        assert getattr(layer, name).shape == layer.weight.shape
    for name in ("bias_velocity", "bias_m", "bias_v", "bias_grad"):
        assert getattr(layer, name).shape == layer.bias.shape


def test_tensor_rank_rules():
    with pytest.raises(ShapeError):
        Tensor(np.zeros(3))
    t = Tensor(np.zeros((3, 5)))
    assert (t.depth, t.height) == (3, 5) and t.grad.shape == t.values.shape
