"""Sampling masks, the undersampled Fourier operator and measurement simulation.

Frequency convention: k-space grids are centred (``numpy.fft.fftshift``
layout), so DC sits at ``(h // 2, w // 2)``.  Masks are boolean arrays in
that layout.  The DFT is unitary (``norm="ortho"``), hence ``F^H F = I``.
Measurement vectors list the sampled frequencies in row-major order of the
mask.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ParameterError, ValidationError
from .patches import as_image


def dc_index(shape):
    return shape[0] // 2, shape[1] // 2


def _check_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValidationError(f"mask must be 2D, got shape {mask.shape}")
    mask = mask.astype(bool, copy=False)
    if not mask.any():
        raise ValidationError("mask samples no frequencies")
    return mask


def make_cartesian_mask(h, w, acceleration, seed=0, center_lines=8, density_power=2.0):
    """Variable-density phase-encode line mask.

    ``round(h / acceleration)`` full rows are sampled: a central band of
    ``center_lines`` rows always, the rest drawn without replacement with
    probability proportional to ``(1 + |row - centre|) ** -density_power``.
    """
    if acceleration < 1:
        raise ParameterError("acceleration must be >= 1")
    budget = min(h, max(1, int(round(h / acceleration))))
    mask = np.zeros((h, w), dtype=bool)
    if budget >= h:
        mask[:] = True
        return mask
    c = h // 2
    band = min(center_lines, h)
    lo = c - band // 2
    central = np.arange(lo, lo + band)
    if band > budget:
        raise ParameterError(
            f"central band of {band} lines exceeds the budget of {budget} lines "
            f"at acceleration {acceleration}"
        )
    rest = np.setdiff1d(np.arange(h), central)
    weights = (1.0 + np.abs(rest - c)) ** (-float(density_power))
    rng = np.random.default_rng(seed)
    picked = rng.choice(rest, size=budget - band, replace=False, p=weights / weights.sum())
    mask[central] = True
    mask[picked] = True
    return mask


def _raster_line(h, w, angle):
    """Grid points of the straight line through DC at ``angle`` (radians)."""
    cr, cc = dc_index((h, w))
    ca, sa = np.cos(angle), np.sin(angle)
    if abs(ca) >= abs(sa):
        cols = np.arange(w)
        rows = np.floor(cr - (cols - cc) * (sa / ca) + 0.5).astype(int)
    else:
        rows = np.arange(h)
        cols = np.floor(cc - (rows - cr) * (ca / sa) + 0.5).astype(int)
    ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return rows[ok], cols[ok]


def make_pseudo_radial_mask(h, w, spokes, seed=0):
    """Union of ``spokes`` rasterized lines through DC at angles ``k * pi / spokes``.

    Angle 0 is the horizontal line (the DC row).  ``seed`` is accepted for a
    uniform generator signature; the pattern is deterministic.
    """
    spokes = int(spokes)
    if spokes < 1:
        raise ParameterError("spokes must be >= 1")
    mask = np.zeros((h, w), dtype=bool)
    for k in range(spokes):
        r, c = _raster_line(h, w, np.pi * k / spokes)
        mask[r, c] = True
    mask[dc_index((h, w))] = True
    return mask


def spokes_for_acceleration(h, w, acceleration):
    """Smallest spoke count whose pseudo-radial mask samples at least ``h*w/acceleration`` points."""
    if acceleration < 1:
        raise ParameterError("acceleration must be >= 1")
    target = h * w / acceleration
    lo, hi = 1, 1
    while make_pseudo_radial_mask(h, w, hi).sum() < target:
        lo, hi = hi, hi * 2
        if hi > 64 * max(h, w):
            raise ParameterError(f"acceleration {acceleration} unreachable")
    while lo < hi:
        mid = (lo + hi) // 2
        if make_pseudo_radial_mask(h, w, mid).sum() >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def random2d_probabilities(h, w, acceleration, density_power):
    """Per-frequency sampling probabilities with expected total ``h*w/acceleration``.

    DC has probability one; the rest follow ``c * (1 + r) ** -density_power``
    clipped at one, with ``c`` set so the expectation matches exactly.
    """
    if acceleration < 1:
        raise ParameterError("acceleration must be >= 1")
    p = h * w
    cr, cc = dc_index((h, w))
    rr, cc_ = np.meshgrid(np.arange(h) - cr, np.arange(w) - cc, indexing="ij")
    f = (1.0 + np.hypot(rr, cc_)) ** (-float(density_power))
    f[cr, cc] = 0.0
    target = p / acceleration - 1.0
    if target <= 0:
        prob = np.zeros((h, w))
    elif target >= p - 1:
        prob = np.ones((h, w))
    else:
        total = lambda c: np.minimum(1.0, c * f).sum() - target  # noqa: E731
        hi = 1.0
        while total(hi) < 0:
            hi *= 2.0
        c = brentq(total, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        prob = np.minimum(1.0, c * f)
    prob[cr, cc] = 1.0
    return prob


def make_random2d_mask(h, w, acceleration, density_power=2.0, seed=0):
    """Independent Bernoulli draw per frequency (see :func:`random2d_probabilities`)."""
    prob = random2d_probabilities(h, w, acceleration, density_power)
    rng = np.random.default_rng(seed)
    return rng.random((h, w)) < prob


def forward(x, mask):
    """Undersampled unitary DFT: ``F_u x``, a length-``m`` complex vector."""
    x = as_image(x)
    mask = _check_mask(mask)
    if x.shape != mask.shape:
        raise ValidationError(f"image {x.shape} and mask {mask.shape} differ in shape")
    return np.fft.fftshift(np.fft.fft2(x, norm="ortho"))[mask]


def adjoint(y, mask):
    """Zero-fill the unsampled frequencies and apply the inverse unitary DFT."""
    mask = _check_mask(mask)
    y = np.asarray(y, dtype=np.complex128).ravel()
    if y.size != int(mask.sum()):
        raise ValidationError(f"{y.size} measurements for a mask with {int(mask.sum())} samples")
    k = np.zeros(mask.shape, dtype=np.complex128)
    k[mask] = y
    return np.fft.ifft2(np.fft.ifftshift(k), norm="ortho")


def normal(x, mask):
    """``F_u^H F_u x`` without forming the measurement vector."""
    k = np.fft.fft2(x, norm="ortho")
    k *= np.fft.ifftshift(mask)
    return np.fft.ifft2(k, norm="ortho")


@dataclass
class KSpaceData:
    """Measured samples ``y`` together with the mask that selected them."""

    y: np.ndarray
    mask: np.ndarray
    noise_sigma: float = 0.0
    seed: int = -1

    def __post_init__(self):
        self.mask = _check_mask(self.mask)
        self.y = np.asarray(self.y, dtype=np.complex128).ravel()
        if self.y.size != int(self.mask.sum()):
            raise ValidationError(
                f"{self.y.size} measurements for a mask with {int(self.mask.sum())} samples"
            )

    @property
    def m(self):
        return self.y.size

    @property
    def shape(self):
        return self.mask.shape


def simulate_measurements(ground_truth, mask, noise_sigma=0.0, seed=0):
    """``y = F_u x + eta`` with circular complex Gaussian noise of variance ``noise_sigma**2``.

    Real and imaginary noise parts each have standard deviation
    ``noise_sigma / sqrt(2)``.
    """
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    y = forward(ground_truth, mask)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((y.size, 2)) * (noise_sigma / np.sqrt(2.0))
        y = y + (noise[:, 0] + 1j * noise[:, 1])
    return KSpaceData(y=y, mask=mask, noise_sigma=float(noise_sigma), seed=int(seed))


def zero_fill_recon(y, mask):
    """Zero-filling reconstruction ``F_u^H y``."""
    return adjoint(y, mask)
