"""Image quality metrics."""
import math

import numpy as np

from .errors import ValidationError


def psnr(reference, test):
    """Peak signal-to-noise ratio of magnitude images, in dB.

    The peak is the largest reference magnitude.  Identical magnitude
    images return ``math.inf``.
    """
    a = np.abs(np.asarray(reference))
    b = np.abs(np.asarray(test))
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(a.max())
    return 20.0 * math.log10(peak / math.sqrt(mse))
