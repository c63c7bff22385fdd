"""Degradation synthesis and the patch dataset.

The degradation chain per 32x32 clean patch: bicubic downscale to 16x16,
add noise (Gaussian first, then Poisson, each present independently with
probability 1/2), bicubic upscale back to 32x32.  The training target is the
residual input - original.

Calibration: Gaussian variance is drawn Uniform(0, 4e-4], whose worst case
gives -10*log10(4e-4) ~= 34 dB.  Poisson uses noisy = Poisson(p * s) / s with
s drawn log-uniformly in [125, 1e5]; at s = 125 and typical mid-gray content
the floor is ~24 dB.  Values are clamped to [0, 1] after every noise stage.

Dataset file (little-endian): magic "SRDD", version u32, patch size u32,
sample count u64; then per sample a provenance record (image id u32, x u32,
y u32, gaussian var f64 or NaN, poisson scale f64 or NaN, seed u64) followed
by the input and target f32 arrays.  Samples are stored in the deterministic
global-shuffle order; the first 80% are the training split.
"""

import hashlib
import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, ParameterError, SizeError
from .imaging import bicubic_resize, load_ppm
from .rng import SeededRng

PATCH_SIZE = 32

_DS_MAGIC = b"SRDD"
_DS_VERSION = 1
_PROV_FMT = "<IIIddQ"


@dataclass
class NoiseParams:
    """Calibrated degradation ranges (see module docstring)."""
    gaussian_var_max: float = 4e-4
    poisson_scale_min: float = 125.0
    poisson_scale_max: float = 1e5
    include_prob: float = 0.5


@dataclass
class NoiseSpec:
    gaussian_var: Optional[float]
    poisson_scale: Optional[float]
    seed: int


@dataclass
class PatchSample:
    input: np.ndarray   # (1, 3, ps, ps) float32, values in [0, 1]
    target: np.ndarray  # (1, 3, ps, ps) float32, residual input - original
    source_image_id: int
    patch_xy: tuple
    noise_spec: NoiseSpec


def add_gaussian(img, var, rng):
    """Additive white Gaussian noise of the given variance, then clamp."""
    if var < 0:
        raise ParameterError("variance must be >= 0, got %g" % var)
    if var == 0:
        return np.array(img, dtype=np.float64, copy=True)
    noise = rng.normal(img.size).reshape(img.shape) * np.sqrt(var)
    return np.clip(img + noise, 0.0, 1.0)


def add_poisson(img, scale, rng):
    """Shot noise: each value p becomes Poisson(p * scale) / scale, clamped."""
    if scale <= 0:
        raise ParameterError("scale must be > 0, got %g" % scale)
    noisy = rng.poisson_array(np.asarray(img, dtype=np.float64) * scale) / scale
    return np.clip(noisy, 0.0, 1.0)


def random_noise_spec(rng, params=None):
    """Sample one degradation: each noise type present with probability 1/2."""
    params = params or NoiseParams()
    u_g, u_var, u_p, u_scale = (rng.uniform() for _ in range(4))
    gaussian_var = None
    if u_g < params.include_prob:
        gaussian_var = params.gaussian_var_max * (1.0 - u_var)  # in (0, max]
    poisson_scale = None
    if u_p < params.include_prob:
        lo, hi = np.log(params.poisson_scale_min), np.log(params.poisson_scale_max)
        poisson_scale = float(np.exp(lo + u_scale * (hi - lo)))
    return NoiseSpec(gaussian_var, poisson_scale, rng.child_seed())


def apply_noise(img, spec):
    """Run a NoiseSpec on a (c, h, w) image with its own seeded stream."""
    rng = SeededRng(spec.seed)
    out = np.asarray(img, dtype=np.float64)
    if spec.gaussian_var is not None:
        out = add_gaussian(out, spec.gaussian_var, rng)
    if spec.poisson_scale is not None:
        out = add_poisson(out, spec.poisson_scale, rng)
    return out


def degrade(patch_original, spec, image_id=0, xy=(0, 0)):
    """Build one training pair from a clean (1, 3, ps, ps) patch."""
    orig = np.asarray(patch_original, dtype=np.float64).reshape(
        patch_original.shape[-3:])
    ps = orig.shape[-1]
    scaled = bicubic_resize(orig, ps // 2, ps // 2)
    noisy = apply_noise(scaled, spec)
    upscaled = bicubic_resize(noisy, ps, ps)
    inp = upscaled.astype(np.float32)[None]
    target = (inp - orig.astype(np.float32)[None]).astype(np.float32)
    return PatchSample(inp, target, image_id, tuple(xy), spec)


def extract_patches(image, count, rng, patch_size=PATCH_SIZE):
    """count random patches (with replacement), uniform over valid corners."""
    _, h, w = image.shape
    if h < patch_size or w < patch_size:
        raise SizeError("image %dx%d smaller than patch size %d" % (h, w, patch_size))
    ys = np.floor(rng.uniform(count) * (h - patch_size + 1)).astype(int)
    xs = np.floor(rng.uniform(count) * (w - patch_size + 1)).astype(int)
    return [(image[:, y:y + patch_size, x:x + patch_size], (int(x), int(y)))
            for y, x in zip(ys, xs)]


# ---------------------------------------------------------------------------
# dataset file + manifest

def write_dataset(samples, path, patch_size=PATCH_SIZE):
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC)
        fh.write(struct.pack("<IIQ", _DS_VERSION, patch_size, len(samples)))
        for s in samples:
            spec = s.noise_spec
            fh.write(struct.pack(
                _PROV_FMT, s.source_image_id, s.patch_xy[0], s.patch_xy[1],
                float("nan") if spec.gaussian_var is None else spec.gaussian_var,
                float("nan") if spec.poisson_scale is None else spec.poisson_scale,
                spec.seed))
            fh.write(np.ascontiguousarray(s.input, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(s.target, dtype="<f4").tobytes())


def read_dataset(path):
    """Returns (inputs, targets, provenance list); arrays are (N, 3, ps, ps)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _DS_MAGIC:
        raise FormatError("bad magic, not a dataset file", offset=0)
    version, patch_size, count = struct.unpack("<IIQ", data[4:20])
    if version != _DS_VERSION:
        raise FormatError("unsupported dataset version %d" % version, offset=4)
    prov_size = struct.calcsize(_PROV_FMT)
    arr_bytes = 4 * 3 * patch_size * patch_size
    rec = prov_size + 2 * arr_bytes
    if len(data) != 20 + count * rec:
        raise FormatError("dataset size mismatch: expected %d bytes, have %d"
                          % (20 + count * rec, len(data)), offset=len(data))
    inputs = np.empty((count, 3, patch_size, patch_size), dtype=np.float32)
    targets = np.empty_like(inputs)
    provenance = []
    pos = 20
    for i in range(count):
        img_id, x, y, gvar, pscale, seed = struct.unpack(
            _PROV_FMT, data[pos:pos + prov_size])
        pos += prov_size
        provenance.append(NoiseSpec(
            None if np.isnan(gvar) else gvar,
            None if np.isnan(pscale) else pscale, seed))
        inputs[i] = np.frombuffer(data[pos:pos + arr_bytes], dtype="<f4").reshape(
            3, patch_size, patch_size)
        pos += arr_bytes
        targets[i] = np.frombuffer(data[pos:pos + arr_bytes], dtype="<f4").reshape(
            3, patch_size, patch_size)
        pos += arr_bytes
    return inputs, targets, provenance


def write_manifest(path, entries):
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write("%s = %s\n" % (key, value))


def read_manifest(path):
    entries = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def build_dataset(image_dir, manifest_out, data_out, seed,
                  patches_per_image=1000, params=None, train_fraction=0.8):
    """Degrade random patches from every PPM in image_dir into a dataset file.

    Per-image work uses a sub-stream derived from (seed, image index), so the
    output is byte-identical for a given seed regardless of scheduling.
    """
    params = params or NoiseParams()
    names = sorted(f for f in os.listdir(image_dir) if f.lower().endswith(".ppm"))
    if not names:
        raise SizeError("no .ppm images found in %s" % image_dir)
    root = SeededRng(seed)
    samples = []
    hashes = []
    try:
        for image_id, name in enumerate(names):
            full = os.path.join(image_dir, name)
            with open(full, "rb") as fh:
                hashes.append(hashlib.sha256(fh.read()).hexdigest())
            image = load_ppm(full)
            img_rng = root.split(image_id)
            for patch, xy in extract_patches(image, patches_per_image, img_rng):
                spec = random_noise_spec(img_rng, params)
                samples.append(degrade(patch[None], spec, image_id, xy))

        shuffle_rng = root.split(len(names) + 1)
        order = np.argsort(shuffle_rng.uniform(len(samples)), kind="stable")
        samples = [samples[i] for i in order]
        n_train = int(len(samples) * train_fraction)

        write_dataset(samples, data_out)
        entries = [
            ("seed", seed),
            ("patch_size", PATCH_SIZE),
            ("patches_per_image", patches_per_image),
            ("train_count", n_train),
            ("val_count", len(samples) - n_train),
            ("total_count", len(samples)),
            ("gaussian_var_max", repr(params.gaussian_var_max)),
            ("poisson_scale_min", repr(params.poisson_scale_min)),
            ("poisson_scale_max", repr(params.poisson_scale_max)),
            ("include_prob", repr(params.include_prob)),
        ]
        entries += [("source_%03d" % i, "%s:%s" % (n, h))
                    for i, (n, h) in enumerate(zip(names, hashes))]
        write_manifest(manifest_out, entries)
        return {k: v for k, v in entries}
    except Exception:
        for p in (data_out, manifest_out):
            if os.path.exists(p):
                os.remove(p)
        raise
