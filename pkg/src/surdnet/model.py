"""The 20-layer residual network: topology, parameter counts, weight files.

Per conv layer i (1-based) the order is Conv -> BN (if i in bn_layers) ->
tanh (if i in tanh_layers).  Defaults: BN on layers 2..19, tanh on layers
1..10.  The net is fully convolutional, so weights trained on 32x32 patches
run unchanged on any spatial size.

Weight file layout (little-endian): magic "SRDC", version u32, config block
(depth, width, in/out channels, bn index list, tanh index list), then tagged
per-layer blocks (1 = conv, 2 = bn, 3 = tanh) holding dims and f32 arrays,
closed by tag 0.  A checkpoint is the same file with a "SRDS" trailer
carrying epoch, learning rate, clip norm, run seed and RNG counter.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ModeError
from .layers import BatchNorm2D, Conv2D, TanhLayer
from .rng import SeededRng
from .tensor import DEFAULT_DTYPE

_MAGIC = b"SRDC"
_TRAILER_MAGIC = b"SRDS"
_VERSION = 1
_TAG_END, _TAG_CONV, _TAG_BN, _TAG_TANH = 0, 1, 2, 3


@dataclass
class SurdcnnConfig:
    depth: int = 20
    width: int = 64
    in_channels: int = 3
    out_channels: int = 3
    bn_layers: frozenset = field(default_factory=lambda: frozenset(range(2, 20)))
    tanh_layers: frozenset = field(default_factory=lambda: frozenset(range(1, 11)))
    init: str = "scaled"  # or "literal" for plain N(0,1) weights

    def validate(self):
        if self.depth < 1 or self.width < 1:
            raise ConfigError("depth and width must be >= 1")
        for i in self.bn_layers | self.tanh_layers:
            if not 1 <= i <= self.depth:
                raise ConfigError("layer index %d outside 1..%d" % (i, self.depth))
        if self.init not in ("scaled", "literal"):
            raise ConfigError("unknown init %r" % self.init)

    def channels(self, i):
        """(c_in, c_out) of conv layer i, 1-based."""
        c_in = self.in_channels if i == 1 else self.width
        c_out = self.out_channels if i == self.depth else self.width
        return c_in, c_out


class Network:
    """Ordered layer stack with a train/infer mode switch."""

    def __init__(self, config, layers):
        self.config = config
        self.layers = layers
        self.training = True

    def train_mode(self):
        self.training = True
        return self

    def infer_mode(self):
        self.training = False
        return self

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x, training=self.training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, Conv2D)]


def build_surdcnn(config=None, rng=None, dtype=DEFAULT_DTYPE):
    config = config or SurdcnnConfig()
    config.validate()
    rng = rng if rng is not None else SeededRng(0)
    layers = []
    for i in range(1, config.depth + 1):
        c_in, c_out = config.channels(i)
        conv = Conv2D(c_in, c_out, rng=rng, dtype=dtype, init=config.init)
        if i == config.depth and config.init == "scaled" and config.depth > 1:
            # start the residual prediction near zero so the untrained net
            # reduces to the bicubic baseline and SGD improves from there
            conv.weight *= conv.weight.dtype.type(0.01)
        layers.append(conv)
        if i in config.bn_layers:
            layers.append(BatchNorm2D(c_out, dtype=dtype))
        if i in config.tanh_layers:
            layers.append(TanhLayer())
    return Network(config, layers)


def count_params(net):
    """(trainable, non_trainable, total) over the whole network."""
    trainable = non_trainable = 0
    for layer in net.layers:
        t, n = layer.param_counts()
        trainable += t
        non_trainable += n
    return trainable, non_trainable, trainable + non_trainable


def predict_residual(net, image):
    """Residual estimate for a (1, 3, H, W) tensor; requires infer mode."""
    if net.training:
        raise ModeError("predict_residual requires infer mode (moving BN stats)")
    return net.forward(image)


# ---------------------------------------------------------------------------
# serialization

def _pack_index_set(indices):
    idx = sorted(indices)
    return struct.pack("<I", len(idx)) + struct.pack("<%dI" % len(idx), *idx)


def save_weights(net, path, trailer=None):
    cfg = net.config
    out = bytearray()
    out += _MAGIC
    out += struct.pack("<IIIII", _VERSION, cfg.depth, cfg.width,
                       cfg.in_channels, cfg.out_channels)
    out += _pack_index_set(cfg.bn_layers)
    out += _pack_index_set(cfg.tanh_layers)
    for layer in net.layers:
        if isinstance(layer, Conv2D):
            out += struct.pack("<III", _TAG_CONV, layer.c_out, layer.c_in)
            out += np.ascontiguousarray(layer.weight, dtype="<f4").tobytes()
            out += np.ascontiguousarray(layer.bias, dtype="<f4").tobytes()
        elif isinstance(layer, BatchNorm2D):
            out += struct.pack("<II", _TAG_BN, layer.c)
            out += struct.pack("<dd", layer.momentum, layer.eps)
            for arr in (layer.gamma, layer.beta, layer.moving_mean, layer.moving_var):
                out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
        else:
            out += struct.pack("<I", _TAG_TANH)
    out += struct.pack("<I", _TAG_END)
    if trailer is not None:
        out += _TRAILER_MAGIC
        out += struct.pack("<IQddQQ", _VERSION, trailer["epoch"],
                           trailer["learning_rate"],
                           trailer.get("clip_norm") or float("nan"),
                           trailer["seed"], trailer["rng_state"])
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError("truncated while reading %s" % what, offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f32_array(self, count, what):
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()


def load_weights(path, dtype=DEFAULT_DTYPE):
    """Rebuild a Network from a weight file; spatial size is unconstrained."""
    with open(path, "rb") as fh:
        data = fh.read()
    net, _ = _parse_weights(data, dtype)
    return net


def _parse_weights(data, dtype=DEFAULT_DTYPE):
    r = _Reader(data)
    if r.take(4, "magic") != _MAGIC:
        raise FormatError("bad magic, not a weight file", offset=0)
    version = r.u32("version")
    if version != _VERSION:
        raise FormatError("unsupported version %d" % version, offset=4)
    depth = r.u32("depth")
    width = r.u32("width")
    in_ch = r.u32("in_channels")
    out_ch = r.u32("out_channels")
    bn = frozenset(r.u32("bn index") for _ in range(r.u32("bn count")))
    tanh = frozenset(r.u32("tanh index") for _ in range(r.u32("tanh count")))
    config = SurdcnnConfig(depth=depth, width=width, in_channels=in_ch,
                           out_channels=out_ch, bn_layers=bn, tanh_layers=tanh)
    config.validate()

    layers = []
    while True:
        at = r.pos
        tag = r.u32("block tag")
        if tag == _TAG_END:
            break
        if tag == _TAG_CONV:
            c_out = r.u32("conv c_out")
            c_in = r.u32("conv c_in")
            conv = Conv2D(c_in, c_out, rng=None, dtype=dtype)
            conv.weight = r.f32_array(c_out * c_in * 9, "conv weight").reshape(
                c_out, c_in, 3, 3).astype(dtype)
            conv.bias = r.f32_array(c_out, "conv bias").astype(dtype)
            conv.grad_weight = np.zeros_like(conv.weight)
            conv.grad_bias = np.zeros_like(conv.bias)
            layers.append(conv)
        elif tag == _TAG_BN:
            c = r.u32("bn channels")
            momentum, eps = struct.unpack("<dd", r.take(16, "bn hyperparams"))
            bn_layer = BatchNorm2D(c, momentum=momentum, eps=eps, dtype=dtype)
            bn_layer.gamma = r.f32_array(c, "bn gamma").astype(dtype)
            bn_layer.beta = r.f32_array(c, "bn beta").astype(dtype)
            bn_layer.moving_mean = r.f32_array(c, "bn moving mean").astype(dtype)
            bn_layer.moving_var = r.f32_array(c, "bn moving var").astype(dtype)
            bn_layer.grad_gamma = np.zeros_like(bn_layer.gamma)
            bn_layer.grad_beta = np.zeros_like(bn_layer.beta)
            layers.append(bn_layer)
        elif tag == _TAG_TANH:
            layers.append(TanhLayer())
        else:
            raise FormatError("unknown block tag %d" % tag, offset=at)

    net = Network(config, layers)
    if len(net.conv_layers()) != depth:
        raise FormatError("conv layer count %d does not match declared depth %d"
                          % (len(net.conv_layers()), depth), offset=r.pos)
    return net, r.pos


def read_trailer(path):
    """Checkpoint trailer dict, or None if the file has no trailer."""
    with open(path, "rb") as fh:
        data = fh.read()
    _, at = _parse_weights(data)
    if at == len(data):
        return None
    r = _Reader(data)
    r.pos = at
    if r.take(4, "trailer magic") != _TRAILER_MAGIC:
        raise FormatError("bad checkpoint trailer magic", offset=at)
    fmt = "<IQddQQ"
    version, epoch, lr, clip, seed, rng_state = struct.unpack(
        fmt, r.take(struct.calcsize(fmt), "trailer body"))
    if version != _VERSION:
        raise FormatError("unsupported trailer version %d" % version, offset=at + 4)
    clip_norm = None if np.isnan(clip) else clip
    return {"epoch": epoch, "learning_rate": lr, "clip_norm": clip_norm,
            "seed": seed, "rng_state": rng_state}
