"""Independent reference computations used by the unit and acceptance tests."""
import itertools

import numpy as np
from scipy.optimize import minimize


def exhaustive_sparse_cost(z, tau):
    """Best ``||z - b||^2 + tau^2 ||b||_0`` over all supports, b = z on the support."""
    best = np.inf
    n = len(z)
    for mask in itertools.product([False, True], repeat=n):
        mask = np.array(mask)
        val = np.sum(np.abs(z[~mask]) ** 2) + tau * tau * mask.sum()
        best = min(best, val)
    return best


def brute_force_rank_cost(Y, theta):
    """``min_r ||Y - Y_r||_F^2 + theta^2 r`` with ``Y_r`` the rank-r truncation."""
    s = np.linalg.svd(Y, compute_uv=False)
    return min(np.sum(s[r:] ** 2) + theta * theta * r for r in range(len(s) + 1))


def haar_unitaries(rng, count, n):
    """``count`` Haar-distributed ``n x n`` unitaries (QR of a Ginibre matrix, phase-corrected)."""
    Z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=1, axis2=2)
    return Q * (d / np.abs(d))[:, None, :]


def stl_objective(W, X, B, lam):
    _, logabs = np.linalg.slogdet(W)
    return float(np.linalg.norm(W @ X - B) ** 2 + 0.5 * lam * np.linalg.norm(W) ** 2 - lam * logabs)


def stl_scalar_minimizer(x, b, lam):
    """Real scalar case: roots of ``(2x^2 + lam) w^2 - 2 x b w - lam = 0``, best one."""
    roots = np.roots([2 * x * x + lam, -2 * x * b, -lam])
    roots = roots[np.isreal(roots)].real
    f = lambda w: (w * x - b) ** 2 + 0.5 * lam * w * w - lam * np.log(abs(w))  # noqa: E731
    return min(roots, key=f)


def stl_local_descent(X, B, lam, rng, starts=20):
    """Best objective from L-BFGS runs on the real parametrization of complex ``W``."""
    n = X.shape[0]

    def unpack(v):
        return v[: n * n].reshape(n, n) + 1j * v[n * n :].reshape(n, n)

    def fg(v):
        W = unpack(v)
        sign, logabs = np.linalg.slogdet(W)
        if sign == 0 or not np.isfinite(logabs):
            return np.inf, np.zeros_like(v)
        R = W @ X - B
        f = np.linalg.norm(R) ** 2 + 0.5 * lam * np.linalg.norm(W) ** 2 - lam * logabs
        G = 2 * R @ X.conj().T + lam * W - lam * np.linalg.inv(W).conj().T
        return f, np.concatenate([G.real.ravel(), G.imag.ravel()])

    best = np.inf
    for _ in range(starts):
        U = haar_unitaries(rng, 1, n)[0] * rng.uniform(0.5, 2.0)
        v0 = np.concatenate([U.real.ravel(), U.imag.ravel()])
        res = minimize(fg, v0, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        best = min(best, float(res.fun))
    return best
