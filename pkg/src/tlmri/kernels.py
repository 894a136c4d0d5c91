"""Backend selection for the hot kernels.

The compiled extension ``tlmri._kernels`` is used when it imports; otherwise
the numpy fallback in ``tlmri._kernels_py`` takes over.  Both produce
bit-identical output.  :func:`use_backend` switches at runtime (tests and
benchmarks).
"""
from contextlib import contextmanager

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _ext
except ImportError:  # pragma: no cover - depends on the build
    _ext = None

_BACKENDS = {"python": _kernels_py}
if _ext is not None:
    _BACKENDS["cython"] = _ext

_active = "cython" if _ext is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _active = name


@contextmanager
def use_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def block_match(patches, row_cands, row_len, col_cands, col_len, grid_w, M):
    """Windowed nearest-patch search.

    Parameters
    ----------
    patches : (N, n) complex128 array
        One patch per row.
    row_cands, col_cands : 2D intp arrays
        Padded candidate grid-row (grid-column) indices for every grid row
        (column), sorted ascending; valid lengths in ``row_len``/``col_len``.
    grid_w : int
        Number of patch-grid columns; patch index is ``row * grid_w + col``.
    M : int
        Group size including the reference.

    Returns
    -------
    (N, M) intp array; column 0 is the reference, then the ``M - 1`` closest
    candidates by squared Euclidean distance, ties broken by index.
    """
    mod = _BACKENDS[_active]
    return mod.block_match(
        np.ascontiguousarray(patches, dtype=np.complex128),
        np.ascontiguousarray(row_cands, dtype=np.intp),
        np.ascontiguousarray(row_len, dtype=np.intp),
        np.ascontiguousarray(col_cands, dtype=np.intp),
        np.ascontiguousarray(col_len, dtype=np.intp),
        int(grid_w),
        int(M),
    )


def scatter_add(idx, vals, size):
    """Sum ``vals`` into a zero vector of length ``size`` at ``idx``, in input order."""
    mod = _BACKENDS[_active]
    return mod.scatter_add(
        np.ascontiguousarray(idx, dtype=np.intp).ravel(),
        np.ascontiguousarray(vals, dtype=np.complex128).ravel(),
        int(size),
    )
