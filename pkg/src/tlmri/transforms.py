"""Sparsifying transforms and their learning sub-steps.

Covers hard-thresholding sparse coding, the unitary (Procrustes) and
well-conditioned closed-form transform updates, clustering over a union of
transforms, and flip/rotation permutations of square patches.  Patch
vectors use the column-major convention of :mod:`tlmri.patches`.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError, ValidationError

MODES = ("fixed", "unitary", "well_conditioned")


def dct_matrix(size):
    """Orthonormal 1D DCT-II matrix; row ``k`` is the ``k``-th atom."""
    return dct(np.eye(size), norm="ortho", axis=0)


def dct2_matrix(patch_side):
    """Orthonormal 2D DCT acting on column-major vectorized ``s x s`` patches."""
    d = dct_matrix(patch_side)
    return np.kron(d, d)


def unitarity_error(W):
    W = np.asarray(W)
    return float(np.linalg.norm(W.conj().T @ W - np.eye(W.shape[1])))


def condition_number(W):
    """Ratio of the extreme singular values; ``inf`` for a singular matrix."""
    s = np.linalg.svd(np.asarray(W), compute_uv=False)
    if s[-1] == 0 or not np.isfinite(s[0] / s[-1]):
        return np.inf
    return float(s[0] / s[-1])


@dataclass
class SquareTransform:
    W: np.ndarray
    mode: str = "unitary"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.complex128)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ValidationError(f"transform must be square, got {self.W.shape}")
        if self.mode not in MODES:
            raise ValidationError(f"unknown transform mode {self.mode!r}")

    @property
    def n(self):
        return self.W.shape[0]


@dataclass
class TransformUnion:
    transforms: list

    @property
    def K(self):
        return len(self.transforms)


@dataclass
class FristModel:
    """Parent transform plus patch permutations; child ``k`` is ``W @ Phi_k``."""

    parent: np.ndarray
    perms: list = field(default_factory=list)

    def __post_init__(self):
        n = self.parent.shape[0]
        if not self.perms:
            self.perms = [np.arange(n)]
        if not np.array_equal(self.perms[0], np.arange(n)):
            raise ValidationError("the first FR operator must be the identity")
        for p in self.perms:
            if not np.array_equal(np.sort(p), np.arange(n)):
                raise ValidationError("FR operators must be permutations")

    @property
    def K(self):
        return len(self.perms)

    def children(self):
        return [child_transform(self.parent, p) for p in self.perms]


def child_transform(W, perm):
    """Matrix of ``z -> W @ z[perm]``."""
    return np.asarray(W)[:, np.argsort(perm)]


def hard_threshold(z, tau):
    """Keep entries with ``|z| >= tau`` and zero the rest.

    This is the exact minimizer of ``||z - b||^2 + tau^2 ||b||_0``.
    """
    if tau < 0:
        raise ParameterError("tau must be non-negative")
    z = np.asarray(z)
    return np.where(np.abs(z) >= tau, z, 0)


def sparse_cost(z, tau):
    """Column-wise ``min_b ||z - b||^2 + tau^2 ||b||_0``, i.e. ``sum(min(|z|^2, tau^2))``."""
    a = np.abs(z) ** 2
    return np.where(np.abs(z) >= tau, tau * tau, a).sum(axis=0)


def sparse_code_patches(patches, transforms, tau, assignment=None, perms=None):
    """Transform-domain sparse codes of every patch.

    Parameters
    ----------
    patches : (n, N) array
    transforms : square array or list of K square arrays
        With ``perms`` given, a single parent transform whose children are
        ``W @ Phi_k``.
    assignment : (N,) int array, optional
        Cluster of each patch; all zeros when omitted.
    """
    patches = np.asarray(patches)
    if perms is not None:
        transforms = [child_transform(transforms, p) for p in perms]
    elif not isinstance(transforms, (list, tuple)):
        transforms = [transforms]
    n, N = patches.shape
    if assignment is None:
        assignment = np.zeros(N, dtype=np.intp)
    assignment = np.asarray(assignment)
    if assignment.shape != (N,):
        raise ValidationError("assignment length must equal the number of patches")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= len(transforms)):
        raise ValidationError("assignment refers to a missing transform")
    codes = np.zeros((transforms[0].shape[0], N), dtype=np.complex128)
    for k, E in enumerate(transforms):
        if E.shape[1] != n:
            raise ValidationError(f"transform {E.shape} does not act on length-{n} patches")
        cols = np.flatnonzero(assignment == k)
        if cols.size:
            codes[:, cols] = hard_threshold(E @ patches[:, cols], tau)
    return codes


def procrustes(cross):
    """Unitary ``W`` maximizing ``Re tr(W @ cross)``: ``V U^H`` for ``cross = U S V^H``."""
    u, _, vh = np.linalg.svd(cross)
    return vh.conj().T @ u.conj().T


def update_transform_unitary(X, B):
    """Global minimizer of ``||W X - B||_F^2`` over unitary ``W``."""
    X = np.asarray(X)
    B = np.asarray(B)
    if X.shape != B.shape:
        raise ValidationError(f"X {X.shape} and B {B.shape} differ in shape")
    return procrustes(X @ B.conj().T)


def update_transform_stl(X, B, lam):
    """Closed-form minimizer of ``||WX - B||^2 + lam/2 ||W||^2 - lam log|det W|``."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    X = np.asarray(X, dtype=np.complex128)
    B = np.asarray(B, dtype=np.complex128)
    n = X.shape[0]
    L = np.linalg.cholesky(X @ X.conj().T + 0.5 * lam * np.eye(n))
    Linv = np.linalg.solve(L, np.eye(n))
    q, s, rh = np.linalg.svd(Linv @ X @ B.conj().T)
    d = 0.5 * (s + np.sqrt(s * s + 2.0 * lam))
    return (rh.conj().T * d) @ q.conj().T @ Linv


def stl_regularizer(W, lam):
    """``lam/2 ||W||_F^2 - lam log|det W|``."""
    _, logabsdet = np.linalg.slogdet(W)
    return 0.5 * lam * float(np.linalg.norm(W) ** 2) - lam * float(logabsdet)


def stl_objective(W, X, B, lam):
    return float(np.linalg.norm(W @ X - B) ** 2) + stl_regularizer(W, lam)


def cluster_costs(patches, transforms, tau):
    """``(K, N)`` array of per-patch sparse-coding costs under each transform."""
    return np.stack([sparse_cost(E @ patches, tau) for E in transforms])


def cluster_assign_unite(patches, transforms, tau):
    """Assign each patch to the transform with the lowest sparse-coding cost.

    ``np.argmin`` returns the first minimum, so ties go to the smallest index.
    """
    if len(transforms) < 1:
        raise ParameterError("need at least one transform")
    return np.argmin(cluster_costs(np.asarray(patches), transforms, tau), axis=0)


def cluster_assign_frist(patches, frist, tau):
    return cluster_assign_unite(patches, frist.children(), tau)


# --- flip and rotation operators ------------------------------------------

FR_KINDS = (
    "identity",
    "rot90",
    "rot180",
    "rot270",
    "flip_h",
    "flip_v",
    "transpose",
    "antitranspose",
)

_FR_GRID_OPS = {
    "identity": lambda g: g,
    "rot90": lambda g: np.rot90(g, 1),
    "rot180": lambda g: np.rot90(g, 2),
    "rot270": lambda g: np.rot90(g, 3),
    "flip_h": np.fliplr,
    "flip_v": np.flipud,
    "transpose": lambda g: g.T,
    "antitranspose": lambda g: np.rot90(g, 2).T,
}


def fr_operator(patch_side, kind):
    """Permutation ``perm`` with ``vec(op(P)) == vec(P)[perm]`` for an ``s x s`` patch ``P``."""
    if kind not in _FR_GRID_OPS:
        raise ParameterError(f"unsupported FR operator {kind!r}; choose from {FR_KINDS}")
    s = int(patch_side)
    grid = np.arange(s * s).reshape(s, s, order="F")
    return np.ascontiguousarray(_FR_GRID_OPS[kind](grid)).ravel(order="F")


def approx_rotation(patch_side, angle_deg):
    """Permutation approximating a rotation by an arbitrary angle.

    Each output pixel takes the input pixel nearest to its rotated
    position, with collisions resolved by a minimum-cost assignment so the
    result is a true permutation.
    """
    s = int(patch_side)
    c = (s - 1) / 2.0
    a, b = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    pos = np.stack([a.ravel(order="F") - c, b.ravel(order="F") - c], axis=1)
    t = np.deg2rad(angle_deg)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    src = pos @ rot.T
    cost = ((src[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(s * s, dtype=np.intp)
    perm[rows] = cols
    return perm


def fr_operators(patch_side, count=8, angles=None):
    """The first ``count`` dihedral operators (identity first), or angle approximations.

    With ``angles`` (degrees) given, returns ``approx_rotation`` permutations
    for each angle instead; angle 0 must come first.
    """
    if angles is not None:
        return [approx_rotation(patch_side, a) for a in angles]
    if not 1 <= count <= len(FR_KINDS):
        raise ParameterError(f"count must be in [1, {len(FR_KINDS)}]")
    return [fr_operator(patch_side, k) for k in FR_KINDS[:count]]


def permutation_matrix(perm):
    n = len(perm)
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0
    return P


def perturbed_unitary(W, scale, rng):
    """Unitary factor of ``W + scale * G`` for a real Gaussian ``G``."""
    G = rng.standard_normal(W.shape)
    u, _, vh = np.linalg.svd(W + scale * G)
    return u @ vh


def init_union(patch_side, K, seed=0, scale=0.1):
    """DCT plus ``K - 1`` seeded unitary perturbations of it."""
    W0 = dct2_matrix(patch_side).astype(np.complex128)
    rng = np.random.default_rng(seed)
    return [W0] + [perturbed_unitary(W0.real, scale, rng).astype(np.complex128) for _ in range(K - 1)]
