"""Synthetic test images."""
import numpy as np

from .errors import ParameterError

# (intensity, semi-axis x, semi-axis y, centre x, centre y, rotation in degrees);
# the contrast-enhanced ten-ellipse head whose values stay in [0, 1]
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

KINDS = ("shepp_logan", "smooth_blobs")


def _pixel_centres(size):
    # symmetric about zero: mirrored columns sample mirrored coordinates
    return (2.0 * np.arange(size) + 1.0) / size - 1.0


def ellipse_image(size, ellipses):
    """Sum of filled ellipses sampled at pixel centres over ``[-1, 1]^2``.

    ``y`` points up, so row 0 is the top of the image.
    """
    t = _pixel_centres(size)
    X, Y = np.meshgrid(t, -t)
    img = np.zeros((size, size))
    for value, a, b, x0, y0, deg in ellipses:
        th = np.deg2rad(deg)
        xr = (X - x0) * np.cos(th) + (Y - y0) * np.sin(th)
        yr = -(X - x0) * np.sin(th) + (Y - y0) * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return img


def shepp_logan(size):
    img = ellipse_image(size, SHEPP_LOGAN_ELLIPSES)
    # overlapping edges can round a hair outside [0, 1]
    return np.clip(img, 0.0, 1.0).astype(np.complex128)


def smooth_blobs(size, seed=0, count=8, phase=True):
    """Seeded sum of Gaussian blobs with peak 1 and an optional smooth phase ramp."""
    rng = np.random.default_rng(seed)
    t = _pixel_centres(size)
    X, Y = np.meshgrid(t, -t)
    img = np.zeros((size, size))
    for _ in range(count):
        cx, cy = rng.uniform(-0.6, 0.6, size=2)
        sx, sy = rng.uniform(0.08, 0.3, size=2)
        amp = rng.uniform(0.3, 1.0)
        img += amp * np.exp(-0.5 * (((X - cx) / sx) ** 2 + ((Y - cy) / sy) ** 2))
    img /= img.max()
    out = img.astype(np.complex128)
    if phase:
        kx, ky = rng.uniform(-np.pi, np.pi, size=2)
        out = out * np.exp(1j * (kx * X + ky * Y))
    return out


def generate_phantom(kind, size, seed=0, phase=True):
    if size < 16:
        raise ParameterError("phantom size must be at least 16")
    if kind == "shepp_logan":
        return shepp_logan(size)
    if kind == "smooth_blobs":
        return smooth_blobs(size, seed=seed, phase=phase)
    raise ParameterError(f"unknown phantom kind {kind!r}; choose from {KINDS}")
