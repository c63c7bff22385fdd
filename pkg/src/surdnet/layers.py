"""Layer forward/backward passes: 3x3 convolution, batch norm, tanh, MSE, SGD.

Every layer keeps the minimum forward state needed for its hand-written
backward pass.  Gradients accumulate with += so a batch can be split; call
zero_grads() (or let SgdOptimizer.step do it) between updates.
"""

import numpy as np

from .errors import ParameterError, ShapeError, SizeError, StateError
from .tensor import DEFAULT_DTYPE


class Conv2D:
    """3x3 convolution, stride 1, zero padding 1 (output size == input size)."""

    def __init__(self, c_in, c_out, rng=None, dtype=DEFAULT_DTYPE, init="scaled"):
        self.c_in = c_in
        self.c_out = c_out
        self.dtype = np.dtype(dtype)
        if rng is None:
            self.weight = np.zeros((c_out, c_in, 3, 3), dtype=self.dtype)
        else:
            # "scaled": N(0, 2/fan_in) keeps activations usable through 20
            # layers; "literal": plain N(0, 1) unit-variance draws.
            std = np.sqrt(2.0 / (9.0 * c_in)) if init == "scaled" else 1.0
            self.weight = (rng.normal(c_out * c_in * 9) * std).reshape(
                c_out, c_in, 3, 3).astype(self.dtype)
        self.bias = np.zeros(c_out, dtype=self.dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._xp = None
        self._in_shape = None

    def forward(self, x, training=True):
        if x.shape[1] != self.c_in:
            raise ShapeError("expected %d input channels, got %d" % (self.c_in, x.shape[1]))
        n, _, h, w = x.shape
        # channels-last internally: nine shifted contiguous slices each feed
        # one (n*h*w, c_in) @ (c_in, c_out) GEMM, which is far cheaper on one
        # core than materializing the full im2col patch matrix
        xp = np.pad(np.ascontiguousarray(x.transpose(0, 2, 3, 1)),
                    ((0, 0), (1, 1), (1, 1), (0, 0)))
        # contiguous (3, 3, c_in, c_out) tap matrices; strided views of the
        # weight tensor would push BLAS onto a very slow path
        wt = np.ascontiguousarray(self.weight.transpose(2, 3, 1, 0))
        y = np.broadcast_to(self.bias, (n * h * w, self.c_out)).copy()
        for u in range(3):
            for v in range(3):
                s = np.ascontiguousarray(xp[:, u:u + h, v:v + w, :]).reshape(-1, self.c_in)
                y += s @ wt[u, v]
        self._xp = xp
        self._in_shape = (n, h, w)
        return np.ascontiguousarray(
            y.reshape(n, h, w, self.c_out).transpose(0, 3, 1, 2))

    def backward(self, grad_out):
        if self._xp is None:
            raise StateError("conv backward called before forward")
        n, h, w = self._in_shape
        if grad_out.shape != (n, self.c_out, h, w):
            raise ShapeError("grad_out shape %s does not match forward output" % (grad_out.shape,))
        g_nhwc = np.ascontiguousarray(grad_out.transpose(0, 2, 3, 1))
        g = g_nhwc.reshape(-1, self.c_out)
        self.grad_bias += g.sum(axis=0)
        for u in range(3):
            for v in range(3):
                s = np.ascontiguousarray(
                    self._xp[:, u:u + h, v:v + w, :]).reshape(-1, self.c_in)
                self.grad_weight[:, :, u, v] += g.T @ s
        # grad wrt input: convolve grad_out with the spatially flipped,
        # channel-transposed kernel (adjoint of the forward map)
        gp = np.pad(g_nhwc, ((0, 0), (1, 1), (1, 1), (0, 0)))
        w_adj = np.ascontiguousarray(self.weight.transpose(2, 3, 0, 1)[::-1, ::-1])
        gi = np.zeros((n * h * w, self.c_in), dtype=grad_out.dtype)
        for u in range(3):
            for v in range(3):
                t = np.ascontiguousarray(gp[:, u:u + h, v:v + w, :]).reshape(-1, self.c_out)
                gi += t @ w_adj[u, v]
        return np.ascontiguousarray(gi.reshape(n, h, w, self.c_in).transpose(0, 3, 1, 2))

    def params(self):
        return [(self.weight, self.grad_weight), (self.bias, self.grad_bias)]

    def zero_grads(self):
        self.grad_weight[...] = 0
        self.grad_bias[...] = 0

    def param_counts(self):
        return self.weight.size + self.bias.size, 0


class BatchNorm2D:
    """Per-channel batch normalization with moving statistics for inference.

    Batch variance is the biased (divide by N) estimate; the moving variance
    stores the same biased estimate.
    """

    def __init__(self, c, momentum=0.9, eps=1e-5, dtype=DEFAULT_DTYPE):
        if not 0.0 < momentum < 1.0:
            raise ParameterError("momentum must be in (0,1), got %g" % momentum)
        if eps <= 0:
            raise ParameterError("eps must be > 0, got %g" % eps)
        self.c = c
        self.momentum = momentum
        self.eps = eps
        self.dtype = np.dtype(dtype)
        self.gamma = np.ones(c, dtype=self.dtype)
        self.beta = np.zeros(c, dtype=self.dtype)
        self.moving_mean = np.zeros(c, dtype=self.dtype)
        self.moving_var = np.ones(c, dtype=self.dtype)
        self.grad_gamma = np.zeros_like(self.gamma)
        self.grad_beta = np.zeros_like(self.beta)
        self._cache = None

    def forward(self, x, training=True):
        if x.shape[1] != self.c:
            raise ShapeError("expected %d channels, got %d" % (self.c, x.shape[1]))
        n, c, h, w = x.shape
        if training:
            if n * h * w == 1:
                raise SizeError("batch with a single value per channel: variance undefined")
            mean = x.mean(axis=(0, 2, 3))
            var = ((x - mean[None, :, None, None]) ** 2).mean(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            m = self.dtype.type(self.momentum)
            self.moving_mean = m * self.moving_mean + (1 - m) * mean.astype(self.dtype)
            self.moving_var = m * self.moving_var + (1 - m) * var.astype(self.dtype)
            self._cache = (xhat, inv_std)
        else:
            inv_std = 1.0 / np.sqrt(self.moving_var + self.eps)
            xhat = (x - self.moving_mean[None, :, None, None]) * inv_std[None, :, None, None]
            self._cache = None
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def backward(self, grad_out):
        if self._cache is None:
            raise StateError("bn backward requires a preceding train-mode forward")
        xhat, inv_std = self._cache
        if grad_out.shape != xhat.shape:
            raise ShapeError("grad_out shape %s does not match forward output" % (grad_out.shape,))
        count = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
        self.grad_beta += grad_out.sum(axis=(0, 2, 3))
        self.grad_gamma += (grad_out * xhat).sum(axis=(0, 2, 3))
        dxhat = grad_out * self.gamma[None, :, None, None]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / count) * (count * dxhat - s1 - xhat * s2)

    def params(self):
        return [(self.gamma, self.grad_gamma), (self.beta, self.grad_beta)]

    def zero_grads(self):
        self.grad_gamma[...] = 0
        self.grad_beta[...] = 0

    def param_counts(self):
        return 2 * self.c, 2 * self.c


class TanhLayer:
    def __init__(self):
        self._y = None

    def forward(self, x, training=True):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad_out):
        if self._y is None:
            raise StateError("tanh backward called before forward")
        if grad_out.shape != self._y.shape:
            raise ShapeError("grad_out shape %s does not match forward output" % (grad_out.shape,))
        return grad_out * (1.0 - self._y * self._y)

    def params(self):
        return []

    def zero_grads(self):
        pass

    def param_counts(self):
        return 0, 0


def mse_loss(pred, target):
    """Mean of squared differences over all elements; returns (loss, grad)."""
    if pred.shape != target.shape:
        raise ShapeError("shape mismatch: %s vs %s" % (pred.shape, target.shape))
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


class SgdOptimizer:
    """Plain SGD: p <- p - lr * grad, with optional global gradient-norm clip."""

    def __init__(self, learning_rate, clip_norm=None):
        if learning_rate < 0:
            raise ParameterError("learning rate must be >= 0, got %g" % learning_rate)
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm

    def step(self, network):
        pairs = [pg for layer in network.layers for pg in layer.params()]
        scale = 1.0
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for _, g in pairs))
            if total > self.clip_norm > 0:
                scale = self.clip_norm / total
        for p, g in pairs:
            p -= p.dtype.type(self.learning_rate * scale) * g
        for layer in network.layers:
            layer.zero_grads()
