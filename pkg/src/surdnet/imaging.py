"""Image I/O, bicubic resampling and PSNR.

Images are numpy arrays of shape (3, h, w) with values in [0, 1].  The
resampler is separable Catmull-Rom cubic convolution (a = -0.5) with
half-pixel-center coordinates (src = (dst + 0.5) * in/out - 0.5) and edge
replication at the borders, so down-by-2 / up-by-2 round trips stay
self-consistent and never read out of range.
"""

import math

import numpy as np

from .errors import FormatError, ShapeError, SizeError

PSNR_INF = float("inf")


# ---------------------------------------------------------------------------
# PPM (binary P6, maxval 255)

def load_ppm(path):
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def token():
        nonlocal pos
        # skip whitespace and '#' comments between header fields
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch.isspace():
                pos += 1
            elif ch == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header", offset=start)
        return data[start:pos]

    magic = token()
    if magic != b"P6":
        raise FormatError("expected P6 magic, got %r" % magic, offset=0)
    try:
        w = int(token())
        h = int(token())
        maxval = int(token())
    except ValueError:
        raise FormatError("non-numeric PPM header field", offset=pos)
    if w < 1 or h < 1:
        raise FormatError("bad dimensions %dx%d" % (w, h), offset=pos)
    if maxval != 255:
        raise FormatError("only maxval 255 supported, got %d" % maxval, offset=pos)
    pos += 1  # single whitespace byte after maxval
    need = 3 * w * h
    raw = data[pos:pos + need]
    if len(raw) != need:
        raise FormatError("truncated pixel data: need %d bytes, have %d"
                          % (need, len(raw)), offset=pos)
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return img.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_ppm(image, path):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError("expected (3, h, w) image, got %s" % (image.shape,))
    u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape[1], image.shape[2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(u8.transpose(1, 2, 0).tobytes())


# ---------------------------------------------------------------------------
# bicubic resize

def _cubic(t):
    """Catmull-Rom kernel (a = -0.5)."""
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return out


def _axis_weights(in_len, out_len):
    """(out_len, in_len) dense resampling matrix for one axis."""
    src = (np.arange(out_len) + 0.5) * (in_len / out_len) - 0.5
    base = np.floor(src).astype(int)
    mat = np.zeros((out_len, in_len))
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, in_len - 1)  # edge replication
        w = _cubic(src - (base + tap))
        np.add.at(mat, (np.arange(out_len), idx), w)
    # kernel weights sum to 1 analytically; renormalize away float residue
    mat /= mat.sum(axis=1, keepdims=True)
    return mat


def bicubic_resize(image, out_h, out_w, clamp=True):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ShapeError("expected (c, h, w) image, got %s" % (image.shape,))
    if out_h < 1 or out_w < 1:
        raise SizeError("output extents must be >= 1, got %dx%d" % (out_h, out_w))
    _, h, w = image.shape
    wy = _axis_weights(h, out_h)
    wx = _axis_weights(w, out_w)
    out = np.einsum("oh,chw->cow", wy, image, optimize=True)
    out = np.einsum("pw,chw->chp", wx, out, optimize=True)
    return np.clip(out, 0.0, 1.0) if clamp else out


def psnr(a, b, peak=1.0):
    """10*log10(peak^2 / MSE) over all values; +inf when the images match."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError("shape mismatch: %s vs %s" % (a.shape, b.shape))
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)
