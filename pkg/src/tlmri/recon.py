"""Block-coordinate-descent reconstruction with learned sparsifying transforms.

Every scheme minimizes

    nu * ||F_u x - y||^2 + R(x, model variables)

by cycling through exact block minimizations: transform update, patch
clustering (or block-matching refresh), sparse coding, low-rank shrinkage
and the quadratic image update.  Schemes:

``baseline_p1``  fixed 2D DCT on patches, no learning
``stl``          one well-conditioned transform (log-det + Frobenius penalty)
``ut``           one unitary transform
``unite``        union of K unitary transforms with patch clustering
``frist``        unitary parent transform with flipped/rotated children
``strollr``      low-rank block-matched groups plus a unitary 3D-patch transform
"""
import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kspace
from .errors import ConfigError, SolverPreconditionError, ValidationError
from .lowrank import LowRankApprox, lowrank_coverage, lowrank_summary
from .metrics import psnr
from .patches import (
    PatchGeometry,
    aggregate_groups,
    aggregate_patches,
    as_image,
    block_match,
    extract_patches,
    group_coverage,
    stack_3d_all,
)
from .transforms import (
    child_transform,
    cluster_costs,
    condition_number,
    dct2_matrix,
    dct_matrix,
    fr_operators,
    hard_threshold,
    init_union,
    procrustes,
    sparse_code_patches,
    stl_regularizer,
    update_transform_stl,
)

SCHEMES = ("baseline_p1", "stl", "ut", "unite", "frist", "strollr")
SOLVERS = ("fourier_diagonal", "cg")
PATCH_SCHEMES = ("baseline_p1", "stl", "ut", "unite", "frist")

# keys a config file must set explicitly, beyond those with defaults
REQUIRED_KEYS = {
    "baseline_p1": ("scheme", "tau0"),
    "stl": ("scheme", "tau0"),
    "ut": ("scheme", "tau0"),
    "unite": ("scheme", "tau0", "K"),
    "frist": ("scheme", "tau0"),
    "strollr": ("scheme", "tau0", "theta"),
}


@dataclass
class ReconConfig:
    """All reconstruction hyperparameters.

    ``nu`` weights the data-fidelity term (it plays the role of the
    fidelity weight of the fixed-transform baseline too).  ``nu=None``
    means ``nu_scale * n``; ``lam=None`` means ``lam_scale * n`` times the
    mean patch energy of the zero-filled image.
    """

    scheme: str = "ut"
    nu: float = None
    nu_scale: float = 1500.0
    tau0: float = 0.4
    tau_decay: float = 0.9
    tau_min: float = 0.02
    lam: float = None
    lam_scale: float = 0.2
    K: int = 4
    frist_ops: int = 8
    union_scale: float = 0.1
    theta: float = 1.0
    gamma_lr: float = 1.0
    gamma_s: float = 1.0
    M: int = 32
    l: int = 8
    window_radius: int = 15
    bm_refresh: int = 1
    recluster_every: int = 1
    patch_side: int = 8
    stride: int = 1
    wraparound: bool = True
    iterations: int = 30
    solver: str = "fourier_diagonal"
    cg_tol: float = 1e-10
    cg_maxiter: int = 1000
    seed: int = 0
    early_stop_tol: float = 0.0
    trace_steps: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        positive = ["nu_scale", "tau0", "lam_scale", "gamma_lr", "gamma_s", "cg_tol"]
        positive += [k for k in ("nu", "lam") if getattr(self, k) is not None]
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if not 0 < self.tau_decay <= 1:
            raise ConfigError("tau_decay must lie in (0, 1]")
        for key in ("tau_min", "theta", "early_stop_tol", "union_scale"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")
        for key in ("K", "M", "l", "patch_side", "stride", "cg_maxiter"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1")
        for key in ("iterations", "window_radius", "bm_refresh", "recluster_every"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if not 1 <= self.frist_ops <= 8:
            raise ConfigError("frist_ops must lie in [1, 8]")
        if self.l > self.M:
            raise ConfigError(f"l={self.l} must not exceed M={self.M}")

    def geometry(self):
        return PatchGeometry(self.patch_side, self.stride, self.wraparound)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def continuation_schedule(tau0, decay, t, tau_min=0.0):
    """Sparsity threshold at outer iteration ``t`` (1-based): ``tau0 * decay**(t-1)``, floored."""
    if not tau0 > 0 or not 0 < decay <= 1:
        raise ValidationError("need tau0 > 0 and 0 < decay <= 1")
    return max(tau0 * decay ** (max(t, 1) - 1), tau_min)


@dataclass
class ObjectiveBreakdown:
    """Terms of the objective at the current variables.

    For STROLLR, ``sparse_resid`` and ``l0`` carry the ``gamma_s`` weight and
    ``lowrank_resid`` and ``rank`` the ``gamma_lr`` weight.
    """

    fidelity: float = 0.0
    sparse_resid: float = 0.0
    l0: float = 0.0
    lowrank_resid: float = 0.0
    rank: float = 0.0
    reg_transform: float = 0.0

    @property
    def total(self):
        return (
            self.fidelity
            + self.sparse_resid
            + self.l0
            + self.lowrank_resid
            + self.rank
            + self.reg_transform
        )


@dataclass
class TraceRow:
    iter: int
    tau: float
    objective: ObjectiveBreakdown
    psnr: float = math.nan
    cond: float = 1.0


@dataclass
class ReconState:
    """Variables of one reconstruction.

    ``transforms`` holds the learnable matrices: one for baseline/stl/ut,
    K for unite, the parent for frist and the 3D-patch transform for
    strollr.  ``codes`` is ``(rows, N)`` with one column per patch (or per
    group for strollr).
    """

    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    tau: float
    transforms: list = field(default_factory=list)
    perms: list = None
    assignment: np.ndarray = None
    codes: np.ndarray = None
    bm: object = None
    lowrank: LowRankApprox = None
    cov_lr: np.ndarray = None
    cov_s: np.ndarray = None

    def effective_transforms(self):
        if self.perms is not None:
            return [child_transform(self.transforms[0], p) for p in self.perms]
        return self.transforms

    def set_groups(self, bm, geom, l):
        self.bm = bm
        self.cov_lr = lowrank_coverage(bm, geom, self.x.shape)
        self.cov_s = group_coverage(bm.groups, geom, self.x.shape, l)


# --- objective ---------------------------------------------------------------


def _sq(a):
    return float(np.sum(a.real ** 2 + a.imag ** 2))


def objective_eval(state, config):
    """Evaluate every objective term at the state's current variables."""
    _require(state, config)
    geom = config.geometry()
    nu = _nu(config)
    out = ObjectiveBreakdown()
    out.fidelity = nu * _sq(kspace.forward(state.x, state.mask) - state.y)
    tau2 = state.tau * state.tau
    X = extract_patches(state.x, geom)
    if config.scheme == "strollr":
        C = stack_3d_all(X, state.bm.groups, config.l)
        out.sparse_resid = config.gamma_s * _sq(state.transforms[0] @ C - state.codes)
        out.l0 = config.gamma_s * tau2 * np.count_nonzero(state.codes)
        out.lowrank_resid = config.gamma_lr * state.lowrank.residual(state.x, state.cov_lr)
        out.rank = config.gamma_lr * config.theta ** 2 * state.lowrank.total_rank
        return out
    resid = 0.0
    for k, E in enumerate(state.effective_transforms()):
        cols = np.flatnonzero(state.assignment == k)
        if cols.size:
            resid += _sq(E @ X[:, cols] - state.codes[:, cols])
    out.sparse_resid = resid
    out.l0 = tau2 * np.count_nonzero(state.codes)
    if config.scheme == "stl":
        out.reg_transform = stl_regularizer(state.transforms[0], _lam(config))
    return out


def _require(state, config):
    missing = [k for k in ("codes", "transforms") if getattr(state, k) is None]
    if config.scheme == "strollr":
        missing += [k for k in ("bm", "lowrank", "cov_lr", "cov_s") if getattr(state, k) is None]
    elif state.assignment is None:
        missing.append("assignment")
    if missing:
        raise ValidationError(f"state lacks {', '.join(missing)} for scheme {config.scheme}")


def _nu(config):
    if config.nu is None:
        raise ConfigError("nu unresolved; build the state with initial_state or set nu")
    return float(config.nu)


def _lam(config):
    if config.lam is None:
        raise ConfigError("lam unresolved; build the state with initial_state or set lam")
    return float(config.lam)


# --- image update ------------------------------------------------------------


@dataclass
class QuadraticSystem:
    """Normal equations ``(nu F_u^H F_u + G) x = rhs`` of the image update.

    ``G`` is the regularizer's normal operator: a per-pixel ``diag`` and/or a
    general ``gram`` callable.  ``eig`` holds its eigenvalues in the
    (unshifted) unitary DFT basis when ``G`` is circulant.
    """

    nu: float
    mask: np.ndarray
    rhs: np.ndarray
    diag: np.ndarray = None
    gram: object = None
    eig: np.ndarray = None

    def apply(self, x):
        out = self.nu * kspace.normal(x, self.mask)
        if self.diag is not None:
            out = out + self.diag * x
        if self.gram is not None:
            out = out + self.gram(x)
        return out

    def preconditioner(self):
        """Fourier-diagonal approximation of the inverse, or ``None``.

        Replaces a per-pixel ``diag`` by its mean; exact when the
        coverage is uniform.
        """
        if self.eig is not None:
            spec = self.eig
        elif self.diag is not None and self.gram is None:
            spec = float(np.mean(self.diag))
        else:
            return None
        den = self.nu * np.fft.ifftshift(self.mask) + spec
        if not np.all(den > 0):
            return None

        def apply_inverse(r):
            return np.fft.ifft2(np.fft.fft2(r, norm="ortho") / den, norm="ortho")

        return apply_inverse

    def residual_norm(self, x):
        return float(np.linalg.norm(self.apply(x) - self.rhs))


def _uniform_value(a):
    a = np.asarray(a)
    return float(a.flat[0]) if np.all(a == a.flat[0]) else None


def build_image_system(state, config):
    """Assemble the image-update normal equations for the current model variables."""
    _require(state, config)
    geom = config.geometry()
    shape = state.x.shape
    nu = _nu(config)
    rhs = nu * kspace.adjoint(state.y, state.mask)
    if config.scheme == "strollr":
        W = state.transforms[0]
        n, l = geom.n, config.l
        back = (W.conj().T @ state.codes).reshape(l, n, -1).transpose(1, 2, 0)
        rhs = rhs + config.gamma_lr * state.lowrank.adjoint
        rhs = rhs + config.gamma_s * aggregate_groups(back, state.bm.groups, geom, shape)
        diag = config.gamma_lr * state.cov_lr + config.gamma_s * state.cov_s
        c = _uniform_value(diag)
        eig = None if c is None else np.full(shape, c)
        return QuadraticSystem(nu, state.mask, rhs, diag=diag, eig=eig)

    transforms = state.effective_transforms()
    back = np.empty_like(state.codes)
    for k, E in enumerate(transforms):
        cols = np.flatnonzero(state.assignment == k)
        if cols.size:
            back[:, cols] = E.conj().T @ state.codes[:, cols]
    agg, counts = aggregate_patches(back, geom, shape)
    rhs = rhs + agg
    if config.scheme != "stl":
        # unitary transforms: sum_i P_i^H W^H W P_i is the coverage count
        c = _uniform_value(counts)
        eig = None if c is None else np.full(shape, c, dtype=float)
        return QuadraticSystem(nu, state.mask, rhs, diag=counts.astype(float), eig=eig)

    gram_mat = transforms[0].conj().T @ transforms[0]

    def gram(x):
        return aggregate_patches(gram_mat @ extract_patches(x, geom), geom, shape)[0]

    eig = None
    if geom.is_uniform():
        impulse = np.zeros(shape, dtype=np.complex128)
        impulse[0, 0] = 1.0
        spectrum = np.fft.fft2(gram(impulse))
        eig = spectrum.real
    return QuadraticSystem(nu, state.mask, rhs, gram=gram, eig=eig)


def solve_fourier(system):
    if system.eig is None:
        raise SolverPreconditionError(
            "regularizer normal operator is not diagonal in the Fourier basis "
            "(non-uniform patch coverage); use the cg solver"
        )
    den = system.nu * np.fft.ifftshift(system.mask) + system.eig
    if not np.all(den > 0):
        raise ValidationError("image-update system is singular")
    return np.fft.ifft2(np.fft.fft2(system.rhs, norm="ortho") / den, norm="ortho")


class CGConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class CGInfo:
    iterations: int
    residuals: list
    energies: list
    converged: bool

    @property
    def residual(self):
        return self.residuals[-1]


def conjugate_gradient(apply, b, x0, tol=1e-10, maxiter=1000, precondition=None):
    """(Preconditioned) conjugate gradients for a Hermitian positive definite operator.

    Stops when ``||A x - b|| <= tol * ||b||``.  ``energies`` records
    ``Re(x^H A x)/2 - Re(b^H x)``, which CG decreases monotonically;
    ``residuals`` holds ``||A x - b||`` per iteration.
    """
    x = np.array(x0, dtype=np.complex128)
    Ax = np.array(apply(x), dtype=np.complex128)  # own copy; apply may return its input
    r = b - Ax
    bnorm = float(np.linalg.norm(b)) or 1.0
    z = r if precondition is None else precondition(r)
    rz = np.vdot(r, z).real
    residuals = [float(np.linalg.norm(r))]
    energies = [0.5 * np.vdot(x, Ax).real - np.vdot(b, x).real]
    p = z.copy()
    it = 0
    while residuals[-1] > tol * bnorm and it < maxiter:
        Ap = apply(p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        Ax += alpha * Ap
        r -= alpha * Ap
        z = r if precondition is None else precondition(r)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        residuals.append(float(np.linalg.norm(r)))
        energies.append(0.5 * np.vdot(x, Ax).real - np.vdot(b, x).real)
    converged = residuals[-1] <= tol * bnorm
    if not converged:
        warnings.warn(
            f"CG stopped after {it} iterations with residual {residuals[-1]:.3e} "
            f"(target {tol * bnorm:.3e})",
            CGConvergenceWarning,
            stacklevel=2,
        )
    return x, CGInfo(it, residuals, energies, converged)


def image_update_fourier(state, config):
    """Exact image update by division in the Fourier domain.

    Raises :class:`SolverPreconditionError` when the regularizer's normal
    operator is not circulant (non-uniform coverage).
    """
    return solve_fourier(build_image_system(state, config))


def image_update_cg(state, config, x0=None):
    """Image update by conjugate gradients, warm-started at the current image.

    Returns
    -------
    x : ndarray
    info : CGInfo
    """
    system = build_image_system(state, config)
    start = state.x if x0 is None else x0
    return conjugate_gradient(
        system.apply, system.rhs, start, config.cg_tol, config.cg_maxiter, system.preconditioner()
    )


# --- driver ------------------------------------------------------------------


def resolve_config(config, x0):
    """Fill the data-dependent defaults ``nu`` and ``lam``."""
    geom = config.geometry()
    changes = {}
    if config.nu is None:
        changes["nu"] = config.nu_scale * geom.n
    if config.lam is None:
        X0 = extract_patches(x0, geom)
        energy = geom.n * _sq(X0) / X0.shape[1]
        changes["lam"] = config.lam_scale * energy if energy > 0 else config.lam_scale
    return config.replace(**changes) if changes else config


def initial_state(y, mask, config):
    """Zero-filled image with DCT-initialized transforms and matching codes.

    Returns the state and the config with ``nu``/``lam`` resolved.
    """
    mask = np.asarray(mask, dtype=bool)
    x = kspace.zero_fill_recon(y, mask)
    config = resolve_config(config, x)
    geom = config.geometry()
    geom.check(x.shape)
    tau = continuation_schedule(config.tau0, config.tau_decay, 1, config.tau_min)
    state = ReconState(x=x, y=np.asarray(y, dtype=np.complex128), mask=mask, tau=tau)
    s = config.patch_side
    X = extract_patches(x, geom)
    if config.scheme == "strollr":
        state.transforms = [np.kron(dct_matrix(config.l), dct2_matrix(s)).astype(np.complex128)]
        bm = block_match(X, geom, x.shape, config.M, config.window_radius)
        state.set_groups(bm, geom, config.l)
        state.codes = hard_threshold(state.transforms[0] @ stack_3d_all(X, bm.groups, config.l), tau)
        state.lowrank = lowrank_summary(X, bm, geom, x.shape, config.theta)
        return state, config
    if config.scheme == "unite":
        state.transforms = init_union(s, config.K, seed=config.seed, scale=config.union_scale)
    else:
        state.transforms = [dct2_matrix(s).astype(np.complex128)]
    if config.scheme == "frist":
        state.perms = fr_operators(s, config.frist_ops)
    eff = state.effective_transforms()
    if len(eff) > 1:
        state.assignment = np.argmin(cluster_costs(X, eff, tau), axis=0)
    else:
        state.assignment = np.zeros(X.shape[1], dtype=np.intp)
    state.codes = sparse_code_patches(X, eff, tau, state.assignment)
    return state, config


class BCDSolver:
    """Runs the block-coordinate-descent iterations of one reconstruction.

    Each step method exactly minimizes the objective over its block of
    variables, so at a fixed threshold the objective never increases.
    """

    STEPS = ("transform", "cluster", "sparse_code", "lowrank", "image")

    def __init__(self, y, mask, config, reference=None):
        if isinstance(y, kspace.KSpaceData):
            y, mask = y.y, y.mask
        self.state, self.config = initial_state(y, mask, config)
        self.geom = self.config.geometry()
        self.reference = None if reference is None else as_image(reference, "reference")
        self.trace = []
        self.step_trace = []
        self.cg_infos = []
        self.bm_rejections = 0
        # codes and low-rank factors already minimized for the current x, W and groups
        self._refit_current = False
        self._record(0)

    # -- bookkeeping

    def objective(self):
        return objective_eval(self.state, self.config)

    def condition_number(self):
        return max(condition_number(W) for W in self.state.transforms)

    def _record(self, t):
        obj = self.objective()
        score = math.nan if self.reference is None else psnr(self.reference, self.state.x)
        cond = self.condition_number() if self.config.scheme == "stl" else 1.0
        self.trace.append(TraceRow(t, self.state.tau, obj, score, cond))
        if self.config.trace_steps:
            self.step_trace.append((t, "init" if t == 0 else "end", obj.total))

    def _mark(self, t, step):
        if self.config.trace_steps:
            self.step_trace.append((t, step, self.objective().total))

    def _patches(self):
        return extract_patches(self.state.x, self.geom)

    # -- block steps

    def transform_update(self):
        st, cfg = self.state, self.config
        if cfg.scheme == "baseline_p1":
            return
        X = self._patches()
        if cfg.scheme == "strollr":
            C = stack_3d_all(X, st.bm.groups, cfg.l)
            st.transforms = [procrustes(C @ st.codes.conj().T)]
        elif cfg.scheme == "stl":
            st.transforms = [update_transform_stl(X, st.codes, _lam(cfg))]
        elif cfg.scheme == "frist":
            cross = np.zeros((X.shape[0], X.shape[0]), dtype=np.complex128)
            for k, perm in enumerate(st.perms):
                cols = np.flatnonzero(st.assignment == k)
                if cols.size:
                    cross += (X[:, cols] @ st.codes[:, cols].conj().T)[perm, :]
            st.transforms = [procrustes(cross)]
        else:
            new = []
            for k, W in enumerate(st.transforms):
                cols = np.flatnonzero(st.assignment == k)
                if cols.size:
                    W = procrustes(X[:, cols] @ st.codes[:, cols].conj().T)
                new.append(W)
            st.transforms = new

    def cluster_update(self, t):
        """Recluster patches (unite/frist) or refresh block matching (strollr)."""
        st, cfg = self.state, self.config
        if cfg.scheme in ("unite", "frist"):
            if cfg.recluster_every and t % cfg.recluster_every == 0:
                X = self._patches()
                eff = st.effective_transforms()
                st.assignment = np.argmin(cluster_costs(X, eff, st.tau), axis=0)
                st.codes = sparse_code_patches(X, eff, st.tau, st.assignment)
        elif cfg.scheme == "strollr":
            if cfg.bm_refresh and t % cfg.bm_refresh == 0:
                self._refresh_groups()

    def _refresh_groups(self):
        # a new grouping changes the objective itself, so it is only kept when
        # the objective with codes re-fitted to it does not exceed the current one
        st, cfg = self.state, self.config
        X = self._patches()
        bm = block_match(X, self.geom, st.x.shape, cfg.M, cfg.window_radius)
        if bm == st.bm:
            return
        trial = dataclasses.replace(st)
        trial.set_groups(bm, self.geom, cfg.l)
        trial.codes = hard_threshold(st.transforms[0] @ stack_3d_all(X, bm.groups, cfg.l), st.tau)
        trial.lowrank = lowrank_summary(X, bm, self.geom, st.x.shape, cfg.theta)
        if objective_eval(trial, cfg).total <= objective_eval(st, cfg).total:
            self.state = trial
            self._refit_current = True
        else:
            self.bm_rejections += 1

    def sparse_code(self):
        st, cfg = self.state, self.config
        if self._refit_current:
            return
        X = self._patches()
        if cfg.scheme == "strollr":
            C = stack_3d_all(X, st.bm.groups, cfg.l)
            st.codes = hard_threshold(st.transforms[0] @ C, st.tau)
        else:
            st.codes = sparse_code_patches(X, st.effective_transforms(), st.tau, st.assignment)

    def lowrank_update(self):
        st, cfg = self.state, self.config
        if cfg.scheme == "strollr" and not self._refit_current:
            st.lowrank = lowrank_summary(self._patches(), st.bm, self.geom, st.x.shape, cfg.theta)

    def image_update(self):
        system = build_image_system(self.state, self.config)
        if self.config.solver == "fourier_diagonal" and system.eig is not None:
            x = solve_fourier(system)
        else:
            x, info = conjugate_gradient(
                system.apply,
                system.rhs,
                self.state.x,
                self.config.cg_tol,
                self.config.cg_maxiter,
                system.preconditioner(),
            )
            self.cg_infos.append(info)
        self.state.x = x

    # -- outer loop

    def iterate(self, t):
        """Run outer iteration ``t`` (1-based); returns the relative image change."""
        st, cfg = self.state, self.config
        st.tau = continuation_schedule(cfg.tau0, cfg.tau_decay, t, cfg.tau_min)
        previous = st.x
        self._refit_current = False
        self.transform_update()
        self._mark(t, "transform")
        self.cluster_update(t)
        self._mark(t, "cluster")
        self.sparse_code()
        self._mark(t, "sparse_code")
        self.lowrank_update()
        self._mark(t, "lowrank")
        self.image_update()
        self._mark(t, "image")
        self._record(t)
        scale = float(np.linalg.norm(previous)) or 1.0
        return float(np.linalg.norm(self.state.x - previous)) / scale

    def run(self, iterations=None):
        T = self.config.iterations if iterations is None else iterations
        for t in range(1, T + 1):
            change = self.iterate(t)
            if self.config.early_stop_tol and change < self.config.early_stop_tol:
                break
        return self.state.x, self.trace


def run_bcd(y, mask, config, reference=None):
    """Reconstruct an image from undersampled k-space.

    Returns
    -------
    x : complex ndarray
    trace : list of TraceRow
        Row 0 describes the zero-filled initialization, row ``t`` the state
        after outer iteration ``t``.
    """
    solver = BCDSolver(y, mask, config, reference=reference)
    return solver.run()
