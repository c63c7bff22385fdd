import numpy as np
import pytest

from gradcheck import check_layer_grads
from surdnet.errors import ParameterError, ShapeError, SizeError, StateError
from surdnet.layers import BatchNorm2D, Conv2D, SgdOptimizer, TanhLayer, mse_loss
from surdnet.model import Network, SurdcnnConfig
from surdnet.rng import SeededRng


def conv_reference(weight, bias, x):
    """Direct nested-loop definition of pad-1 stride-1 3x3 convolution."""
    n, c, h, w = x.shape
    c_out = weight.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, c_out, h, w))
    for b in range(n):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = bias[o]
                    for k in range(c):
                        acc += np.sum(weight[o, k] * xp[b, k, i:i + 3, j:j + 3])
                    out[b, o, i, j] = acc
    return out


def make_conv(c_in, c_out, seed=0, dtype=np.float64):
    return Conv2D(c_in, c_out, rng=SeededRng(seed), dtype=dtype)


# ---------------------------------------------------------------------------
# conv forward

def test_conv_identity_kernel():
    conv = Conv2D(1, 1, dtype=np.float64)
    conv.weight[0, 0, 1, 1] = 1.0
    x = SeededRng(1).normal(25).reshape(1, 1, 5, 5)
    assert np.allclose(conv.forward(x), x)


def test_conv_zero_weights():
    conv = Conv2D(2, 3, dtype=np.float64)
    x = SeededRng(2).normal(2 * 16).reshape(1, 2, 4, 4)
    assert not conv.forward(x).any()


def test_conv_ones_kernel_hand_case():
    conv = Conv2D(1, 1, dtype=np.float64)
    conv.weight[...] = 1.0
    y = conv.forward(np.ones((1, 1, 3, 3)))[0, 0]
    expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=float)
    assert np.array_equal(y, expected)


def test_conv_matches_direct_loop_float32():
    rng = SeededRng(3)
    conv = Conv2D(3, 4, rng=rng, dtype=np.float32)
    x = rng.normal(2 * 3 * 6 * 7).reshape(2, 3, 6, 7).astype(np.float32)
    got = conv.forward(x)
    ref = conv_reference(conv.weight.astype(np.float64),
                         conv.bias.astype(np.float64), x.astype(np.float64))
    denom = np.maximum(np.abs(ref), 1.0)
    assert np.max(np.abs(got - ref) / denom) < 1e-6


def test_conv_channel_mismatch():
    conv = Conv2D(3, 4)
    with pytest.raises(ShapeError):
        conv.forward(np.zeros((1, 2, 4, 4), dtype=np.float32))


def test_conv_shift_equivariance_interior():
    rng = SeededRng(4)
    conv = Conv2D(1, 1, rng=rng, dtype=np.float64)
    x = rng.normal(100).reshape(1, 1, 10, 10)
    shifted = np.roll(x, (2, 1), axis=(2, 3))
    y, ys = conv.forward(x), conv.forward(shifted)
    # compare pixels at least 1 px inside the border in both frames
    assert np.allclose(np.roll(y, (2, 1), axis=(2, 3))[:, :, 3:-3, 3:-3],
                       ys[:, :, 3:-3, 3:-3])


# ---------------------------------------------------------------------------
# conv backward

def test_conv_backward_zero_grad():
    conv = make_conv(2, 3)
    x = SeededRng(5).normal(2 * 25).reshape(1, 2, 5, 5)
    conv.forward(x)
    gin = conv.backward(np.zeros((1, 3, 5, 5)))
    assert not gin.any() and not conv.grad_weight.any() and not conv.grad_bias.any()


def test_conv_backward_before_forward():
    with pytest.raises(StateError):
        make_conv(1, 1).backward(np.zeros((1, 1, 3, 3)))


def test_conv_backward_finite_difference():
    rng = SeededRng(6)
    conv = make_conv(2, 3, seed=6)
    x = rng.normal(2 * 25).reshape(1, 2, 5, 5)
    check_layer_grads(conv, x, rel_tol=1e-5)


def test_conv_delta_kernel_adjoint():
    conv = Conv2D(1, 1, dtype=np.float64)
    conv.weight[0, 0, 1, 1] = 1.0
    x = np.zeros((1, 1, 5, 5))
    conv.forward(x)
    g = np.zeros((1, 1, 5, 5))
    g[0, 0, 2, 3] = 1.0
    assert np.array_equal(conv.backward(g), g)


def test_conv_param_counts():
    assert Conv2D(3, 64).param_counts() == (1792, 0)
    assert Conv2D(64, 64).param_counts() == (36928, 0)
    assert Conv2D(64, 3).param_counts() == (1731, 0)


# ---------------------------------------------------------------------------
# batch norm

def test_bn_train_normalizes():
    bn = BatchNorm2D(3, dtype=np.float64)
    x = SeededRng(7).normal(4 * 3 * 8 * 8).reshape(4, 3, 8, 8) * 3.0 + 1.5
    y = bn.forward(x, training=True)
    mean = y.mean(axis=(0, 2, 3))
    var = y.var(axis=(0, 2, 3))
    assert np.all(np.abs(mean) < 1e-5)
    assert np.all(np.abs(var - 1.0) < 1e-3)


def test_bn_gamma_zero_gives_beta():
    bn = BatchNorm2D(2, dtype=np.float64)
    bn.gamma[...] = 0.0
    bn.beta[...] = np.array([0.25, -1.0])
    y = bn.forward(SeededRng(8).normal(2 * 9).reshape(1, 2, 3, 3) * 2,
                   training=True)
    assert np.allclose(y[0, 0], 0.25) and np.allclose(y[0, 1], -1.0)


def test_bn_infer_identity_stats():
    bn = BatchNorm2D(2, dtype=np.float64)
    x = SeededRng(9).normal(2 * 2 * 16).reshape(2, 2, 4, 4)
    y = bn.forward(x, training=False)  # moving stats are (0, 1) at init
    assert np.max(np.abs(y - x)) < 1e-5 * np.max(np.abs(x))


def test_bn_degenerate_batch():
    bn = BatchNorm2D(2, dtype=np.float64)
    with pytest.raises(SizeError):
        bn.forward(np.zeros((1, 2, 1, 1)), training=True)


def test_bn_backward_in_infer_mode():
    bn = BatchNorm2D(2, dtype=np.float64)
    x = np.zeros((2, 2, 2, 2))
    bn.forward(x, training=False)
    with pytest.raises(StateError):
        bn.backward(x)


def test_bn_grad_beta_is_channel_sum():
    bn = BatchNorm2D(3, dtype=np.float64)
    rng = SeededRng(10)
    x = rng.normal(2 * 3 * 16).reshape(2, 3, 4, 4)
    g = rng.normal(2 * 3 * 16).reshape(2, 3, 4, 4)
    bn.forward(x, training=True)
    bn.backward(g)
    assert np.allclose(bn.grad_beta, g.sum(axis=(0, 2, 3)))


def test_bn_backward_finite_difference():
    bn = BatchNorm2D(3, dtype=np.float64)
    rng = SeededRng(11)
    bn.gamma[...] = rng.normal(3) * 0.3 + 1.0
    bn.beta[...] = rng.normal(3) * 0.2
    x = rng.normal(2 * 3 * 16).reshape(2, 3, 4, 4)
    check_layer_grads(bn, x, rel_tol=1e-4)


def test_bn_affine_invariance_of_normalized_activations():
    bn = BatchNorm2D(2, eps=1e-12, dtype=np.float64)
    rng = SeededRng(12)
    x = rng.normal(4 * 2 * 25).reshape(4, 2, 5, 5)
    y1 = bn.forward(x, training=True)
    y2 = bn.forward(2.5 * x + 0.7, training=True)
    assert np.max(np.abs(y1 - y2)) < 1e-3


def test_bn_param_counts():
    assert BatchNorm2D(64).param_counts() == (128, 128)


def test_bn_moving_stats_update():
    bn = BatchNorm2D(1, momentum=0.9, dtype=np.float64)
    x = np.full((1, 1, 2, 2), 2.0)
    x[0, 0, 0, 0] = 0.0  # batch mean 1.5, biased var 0.75
    bn.forward(x, training=True)
    assert np.allclose(bn.moving_mean, 0.9 * 0.0 + 0.1 * 1.5)
    assert np.allclose(bn.moving_var, 0.9 * 1.0 + 0.1 * 0.75)
    assert np.all(bn.moving_var >= 0)


def test_bn_hyperparameter_validation():
    with pytest.raises(ParameterError):
        BatchNorm2D(2, momentum=1.5)
    with pytest.raises(ParameterError):
        BatchNorm2D(2, eps=0.0)


# ---------------------------------------------------------------------------
# tanh

def test_tanh_zero():
    layer = TanhLayer()
    y = layer.forward(np.zeros((1, 1, 2, 2)))
    assert not y.any()
    assert np.allclose(layer.backward(np.ones((1, 1, 2, 2))), 1.0)


def test_tanh_saturation_no_nan():
    layer = TanhLayer()
    x = np.array([[[[20.0, -20.0]]]])
    y = layer.forward(x)
    assert np.all(np.isfinite(y))
    assert abs(y[0, 0, 0, 0] - 1.0) < 1e-15
    assert abs(y[0, 0, 0, 1] + 1.0) < 1e-15
    g = layer.backward(np.ones_like(x))
    assert np.all(np.abs(g) < 1e-15)


def test_tanh_finite_difference():
    x = SeededRng(13).normal(2 * 9).reshape(1, 2, 3, 3)
    check_layer_grads(TanhLayer(), x, rel_tol=1e-6)


def test_tanh_backward_before_forward():
    with pytest.raises(StateError):
        TanhLayer().backward(np.zeros((1, 1, 2, 2)))


# ---------------------------------------------------------------------------
# loss and optimizer

def test_mse_identical():
    x = SeededRng(14).normal(12).reshape(1, 3, 2, 2)
    loss, grad = mse_loss(x, x.copy())
    assert loss == 0.0 and not grad.any()


def test_mse_constant_residual():
    pred = np.zeros((1, 3, 4, 4)) + 0.1
    target = np.zeros((1, 3, 4, 4))
    loss, grad = mse_loss(pred, target)
    assert loss == pytest.approx(0.01, abs=1e-15)
    assert np.allclose(grad, 2 * 0.1 / pred.size)


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        mse_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


def test_mse_finite_difference():
    rng = SeededRng(15)
    pred = rng.normal(18).reshape(1, 2, 3, 3)
    target = rng.normal(18).reshape(1, 2, 3, 3)
    loss, grad = mse_loss(pred, target)
    eps = 1e-6
    for i in [0, 5, 17]:
        old = pred.ravel()[i]
        pred.ravel()[i] = old + eps
        lp, _ = mse_loss(pred, target)
        pred.ravel()[i] = old - eps
        lm, _ = mse_loss(pred, target)
        pred.ravel()[i] = old
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - grad.ravel()[i]) / max(abs(fd), 1e-9) < 1e-6


def _one_conv_net(lr_seed=16):
    conv = make_conv(1, 1, seed=lr_seed)
    return Network(SurdcnnConfig(depth=1, width=1, in_channels=1, out_channels=1,
                                 bn_layers=frozenset(), tanh_layers=frozenset()),
                   [conv]), conv


def test_sgd_zero_lr():
    net, conv = _one_conv_net()
    before = conv.weight.copy()
    conv.grad_weight[...] = 1.0
    SgdOptimizer(0.0).step(net)
    assert np.array_equal(conv.weight, before)
    assert not conv.grad_weight.any()  # grads zeroed by the step


def test_sgd_scalar_arithmetic():
    net, conv = _one_conv_net()
    conv.bias[0] = 1.0
    conv.grad_bias[0] = 2.0
    SgdOptimizer(0.1).step(net)
    assert conv.bias[0] == pytest.approx(0.8)


def test_sgd_negative_lr_rejected():
    with pytest.raises(ParameterError):
        SgdOptimizer(-0.1)


def test_sgd_one_step_decreases_loss():
    net, conv = _one_conv_net()
    rng = SeededRng(17)
    x = rng.normal(32).reshape(2, 1, 4, 4)
    t = rng.normal(32).reshape(2, 1, 4, 4)
    loss0, grad = mse_loss(net.forward(x), t)
    net.backward(grad)
    SgdOptimizer(1e-3).step(net)
    loss1, _ = mse_loss(net.forward(x), t)
    assert loss1 < loss0


def test_sgd_leaves_moving_stats_untouched():
    bn = BatchNorm2D(2, dtype=np.float64)
    net = Network(SurdcnnConfig(depth=1, width=2, in_channels=2, out_channels=2,
                                bn_layers=frozenset([1]), tanh_layers=frozenset()),
                  [bn])
    bn.forward(SeededRng(18).normal(2 * 2 * 16).reshape(2, 2, 4, 4), training=True)
    mm, mv = bn.moving_mean.copy(), bn.moving_var.copy()
    bn.grad_gamma[...] = 1.0
    SgdOptimizer(0.5).step(net)
    assert np.array_equal(bn.moving_mean, mm)
    assert np.array_equal(bn.moving_var, mv)


# ---------------------------------------------------------------------------
# randomized gradient property (>= 20 trials across layer types)

def test_randomized_gradient_property():
    worst = 0.0
    for trial in range(21):
        rng = SeededRng(1000 + trial)
        np_rng = np.random.default_rng(trial)
        n = int(np_rng.integers(1, 3))
        c_in = int(np_rng.integers(1, 4))
        h = int(np_rng.integers(2, 6))
        w = int(np_rng.integers(2, 6))
        x = rng.normal(n * c_in * h * w).reshape(n, c_in, h, w)
        kind = trial % 3
        if kind == 0:
            c_out = int(np_rng.integers(1, 4))
            layer = Conv2D(c_in, c_out, rng=rng, dtype=np.float64)
        elif kind == 1:
            layer = BatchNorm2D(c_in, dtype=np.float64)
            layer.gamma[...] = rng.normal(c_in) * 0.2 + 1.0
        else:
            layer = TanhLayer()
        worst = max(worst, check_layer_grads(layer, x, rel_tol=1e-4,
                                             sample=30, seed=trial))
    assert worst < 1e-4
