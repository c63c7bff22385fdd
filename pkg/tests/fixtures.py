"""Synthetic natural-like image fixtures shared by the test suite.

Images are sums of bicubic-upscaled uniform noise octaves, giving the
1/f-like spectrum of natural photographs: large smooth regions with
moderate mid-frequency structure.
"""

import numpy as np

from surdnet.imaging import bicubic_resize
from surdnet.rng import SeededRng


def make_image(seed, h, w, mean=None):
    """A (3, h, w) float64 image in [0, 1] with a natural-ish spectrum."""
    rng = SeededRng(seed)
    img = np.zeros((3, h, w))
    amplitude = 1.0
    total = 0.0
    for octave in (6, 12, 24, 48):
        oh, ow = min(octave, h), min(octave, w)
        field = rng.uniform(3 * oh * ow).reshape(3, oh, ow)
        img += amplitude * bicubic_resize(field, h, w, clamp=False)
        total += amplitude
        amplitude *= 0.5
    img /= total
    img = 0.15 + 0.7 * img  # keep headroom so added noise rarely clips
    if mean is not None:
        img += mean - img.mean()
    return np.clip(img, 0.0, 1.0)
