"""Patch extraction/aggregation and nonlocal patch grouping.

Images are 2D complex ndarrays indexed ``[row, col]``.  A patch is the
``s x s`` block whose top-left corner sits on the patch grid; it is
vectorized column-major (rows vary fastest), giving length ``n = s**2``.
Patch matrices are ``(n, N)`` with columns in raster order of the corners.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import GeometryError, ParameterError, ValidationError


def as_image(x, name="image"):
    """Validate a 2D finite array and return it as complex128."""
    a = np.asarray(x)
    if a.ndim != 2 or a.size == 0:
        raise ValidationError(f"{name} must be a non-empty 2D array, got shape {a.shape}")
    a = a.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return a


@dataclass(frozen=True)
class PatchGeometry:
    """Square patch layout.

    With ``wraparound`` the corners run over every ``stride``-th pixel and
    indices wrap cyclically, so stride 1 yields one patch per pixel.
    Without it, corners stay inside the image and the last row/column of
    corners is always included so every pixel is covered.
    """

    patch_side: int = 8
    stride: int = 1
    wraparound: bool = True

    def __post_init__(self):
        if int(self.patch_side) < 1 or int(self.stride) < 1:
            raise GeometryError("patch_side and stride must be positive")

    @property
    def n(self):
        return self.patch_side * self.patch_side

    def check(self, shape):
        h, w = shape
        if self.patch_side > h or self.patch_side > w:
            raise GeometryError(
                f"{self.patch_side}x{self.patch_side} patches do not fit a {h}x{w} image"
            )

    def _axis_corners(self, length):
        s = self.patch_side
        if self.wraparound:
            return np.arange(0, length, self.stride)
        corners = list(range(0, length - s + 1, self.stride))
        if corners[-1] != length - s:
            corners.append(length - s)
        return np.asarray(corners)

    def grid(self, shape):
        """Corner coordinates ``(rows, cols)`` of the patch grid."""
        self.check(shape)
        return self._axis_corners(shape[0]), self._axis_corners(shape[1])

    def count(self, shape):
        rows, cols = self.grid(shape)
        return len(rows) * len(cols)

    def index_map(self, shape):
        """``(n, N)`` array of flat pixel indices; column ``i`` lists patch ``i``."""
        return _index_map(self, tuple(int(v) for v in shape))

    def is_uniform(self):
        """True when every pixel is covered exactly ``n`` times."""
        return self.wraparound and self.stride == 1


@lru_cache(maxsize=32)
def _index_map(geom, shape):
    h, w = shape
    rows, cols = geom.grid(shape)
    s = geom.patch_side
    # column-major offsets inside the patch: entry a + s*b is (row a, col b)
    da = np.tile(np.arange(s), s)
    db = np.repeat(np.arange(s), s)
    r = rows[None, :, None] + da[:, None, None]
    c = cols[None, None, :] + db[:, None, None]
    if geom.wraparound:
        r %= h
        c %= w
    idx = (r * w + c).reshape(geom.n, -1)
    idx.setflags(write=False)
    return idx


def extract_patches(img, geom):
    """Return the ``(n, N)`` patch matrix of ``img``."""
    x = as_image(img)
    return x.ravel()[geom.index_map(x.shape)]


def scatter_patches(values, idx, size):
    """Adjoint of gathering ``x.ravel()[idx]``: sum ``values`` into pixels.

    Summation runs column by column, entry by entry, so the result is
    deterministic.
    """
    values = np.asarray(values)
    if values.shape != idx.shape:
        raise ValidationError(f"patch values {values.shape} do not match indices {idx.shape}")
    return kernels.scatter_add(np.ascontiguousarray(idx.T), np.ascontiguousarray(values.T), size)


def aggregate_patches(patches, geom, shape):
    """Apply the adjoint of :func:`extract_patches`.

    Returns
    -------
    acc : complex ndarray, ``shape``
        Pixel ``q`` holds the sum over all patches covering ``q`` of that
        patch's value at ``q``.
    counts : int ndarray, ``shape``
        Number of patches covering each pixel.
    """
    idx = geom.index_map(shape)
    acc = scatter_patches(patches, idx, shape[0] * shape[1]).reshape(shape)
    return acc, coverage(idx, shape)


def coverage(idx, shape):
    """Per-pixel count of occurrences of each flat index in ``idx``."""
    size = shape[0] * shape[1]
    return np.bincount(np.ravel(idx), minlength=size).reshape(shape)


@dataclass(frozen=True)
class BlockMatchResult:
    """Block-matching groups.

    ``groups[i]`` lists the ``M`` patch indices of group ``i`` in match
    order: the reference ``i`` first, then its partners by ascending
    distance.
    """

    groups: np.ndarray
    window_radius: int

    @property
    def M(self):
        return self.groups.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BlockMatchResult):
            return NotImplemented
        return self.window_radius == other.window_radius and np.array_equal(
            self.groups, other.groups
        )

    __hash__ = None


def _axis_candidates(corners, length, radius, wrap):
    d = np.abs(corners[:, None] - corners[None, :])
    if wrap:
        d = np.minimum(d, length - d)
    ok = d <= radius
    lens = ok.sum(axis=1)
    cands = np.zeros((len(corners), int(lens.max())), dtype=np.intp)
    for u in range(len(corners)):
        sel = np.flatnonzero(ok[u])
        cands[u, : len(sel)] = sel
    return cands, lens.astype(np.intp)


def window_candidates(geom, shape, radius):
    """Per-axis candidate grid indices within Chebyshev ``radius`` of each corner."""
    rows, cols = geom.grid(shape)
    rc, rl = _axis_candidates(rows, shape[0], radius, geom.wraparound)
    cc, cl = _axis_candidates(cols, shape[1], radius, geom.wraparound)
    return rc, rl, cc, cl


def block_match(patches, geom, shape, M, window_radius=15):
    """Group every patch with its ``M - 1`` most similar neighbours.

    Candidates are the grid patches whose corner lies within Chebyshev
    distance ``window_radius`` of the reference corner (cyclic distance
    under wraparound).  Similarity is squared Euclidean distance between
    complex patch vectors; ties go to the lower patch index.

    Parameters
    ----------
    patches : (n, N) complex array
        Output of :func:`extract_patches` for an image of ``shape``.
    """
    M = int(M)
    radius = int(window_radius)
    if M < 1:
        raise ParameterError("M must be at least 1")
    if radius < 0:
        raise ParameterError("window_radius must be non-negative")
    patches = np.asarray(patches)
    N = geom.count(shape)
    if patches.shape != (geom.n, N):
        raise ValidationError(f"patch matrix {patches.shape} does not match geometry ({geom.n}, {N})")
    rc, rl, cc, cl = window_candidates(geom, shape, radius)
    smallest = int(rl.min()) * int(cl.min())
    if smallest < M:
        raise ParameterError(
            f"search window radius {radius} holds only {smallest} patches, fewer than M={M}"
        )
    groups = kernels.block_match(patches.T, rc, rl, cc, cl, len(cl), M)
    groups.setflags(write=False)
    return BlockMatchResult(groups=groups, window_radius=radius)


def gather_groups(patches, groups, width=None):
    """Stack grouped patches into an ``(N, n, L)`` array (first ``width`` columns)."""
    g = groups if width is None else groups[:, :width]
    return np.moveaxis(patches[:, g], 0, 1)


def stack_block(img, geom, bm, i):
    """Return the ``(n, M)`` matrix of group ``i`` in match order."""
    patches = extract_patches(img, geom)
    return patches[:, bm.groups[i]]


def stack_3d(img, geom, bm, i, l):
    """Return the first ``l`` columns of group ``i``, vectorized column-major."""
    if not 1 <= l <= bm.M:
        raise ParameterError(f"l={l} must lie in [1, M={bm.M}]")
    return stack_block(img, geom, bm, i)[:, :l].ravel(order="F")


def stack_3d_all(patches, groups, l):
    """``(n*l, N)`` matrix whose column ``i`` is the 3D patch of group ``i``."""
    n, N = patches.shape
    g = patches[:, groups[:, :l]]  # (n, N, l)
    return np.ascontiguousarray(g.transpose(2, 0, 1).reshape(l * n, N))


def aggregate_groups(values, groups, geom, shape):
    """Adjoint of grouped gathering.

    ``values`` is ``(n, N, L)``: entry ``[:, i, j]`` is scattered onto the
    pixels of patch ``groups[i, j]``.
    """
    L = values.shape[2]
    idx = geom.index_map(shape)[:, groups[:, :L]]
    size = shape[0] * shape[1]
    return scatter_patches(values, idx, size).reshape(shape)


def group_coverage(groups, geom, shape, width):
    """Per-pixel multiplicity of the grouped-gather operator over ``width`` columns."""
    idx = geom.index_map(shape)[:, groups[:, :width]]
    return coverage(idx, shape)
