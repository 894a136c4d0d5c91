"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def block_match(patches, row_cands, row_len, col_cands, col_len, grid_w, M):
    N = patches.shape[0]
    keep = M - 1
    out = np.empty((N, M), dtype=np.intp)
    out[:, 0] = np.arange(N)
    if keep == 0:
        return out
    cols = patches.T  # (n, N); row-wise reduction below sums in patch-entry order
    for i in range(N):
        u, v = divmod(i, grid_w)
        rows = row_cands[u, : row_len[u]]
        cand = (rows[:, None] * grid_w + col_cands[v, : col_len[v]][None, :]).ravel()
        cand = cand[cand != i]
        diff = cols[:, cand] - cols[:, i : i + 1]
        d = diff.real * diff.real + diff.imag * diff.imag
        acc = d[0].copy()
        for k in range(1, d.shape[0]):
            acc += d[k]
        order = np.argsort(acc, kind="stable")[:keep]
        out[i, 1:] = cand[order]
    return out


def scatter_add(idx, vals, size):
    out = np.zeros(size, dtype=np.complex128)
    out.real = np.bincount(idx, weights=vals.real, minlength=size)
    out.imag = np.bincount(idx, weights=vals.imag, minlength=size)
    return out
