"""Compiled hot loops: windowed block matching and patch scatter-add.

Both functions mirror ``_kernels_py`` operation for operation so the two
backends return bit-identical results.
"""
import numpy as np


def block_match(const double complex[:, ::1] patches,
                const Py_ssize_t[:, ::1] row_cands, const Py_ssize_t[::1] row_len,
                const Py_ssize_t[:, ::1] col_cands, const Py_ssize_t[::1] col_len,
                Py_ssize_t grid_w, Py_ssize_t M):
    cdef Py_ssize_t N = patches.shape[0]
    cdef Py_ssize_t n = patches.shape[1]
    cdef Py_ssize_t keep = M - 1
    out_arr = np.empty((N, M), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] out = out_arr
    bufd_arr = np.empty(max(keep, 1), dtype=np.float64)
    bufj_arr = np.empty(max(keep, 1), dtype=np.intp)
    cdef double[::1] bufd = bufd_arr
    cdef Py_ssize_t[::1] bufj = bufj_arr
    cdef Py_ssize_t i, u, v, a, b, j, k, ru, count, pos
    cdef double d, dr, di
    cdef double complex diff

    for i in range(N):
        out[i, 0] = i
        if keep == 0:
            continue
        u = i // grid_w
        v = i - u * grid_w
        count = 0
        for a in range(row_len[u]):
            ru = row_cands[u, a] * grid_w
            for b in range(col_len[v]):
                j = ru + col_cands[v, b]
                if j == i:
                    continue
                d = 0.0
                for k in range(n):
                    diff = patches[j, k] - patches[i, k]
                    dr = diff.real
                    di = diff.imag
                    d = d + (dr * dr + di * di)
                if count < keep:
                    pos = count
                    count += 1
                elif d < bufd[keep - 1]:
                    pos = keep - 1
                else:
                    continue
                # candidates arrive in ascending j: strict comparison keeps ties stable
                while pos > 0 and bufd[pos - 1] > d:
                    bufd[pos] = bufd[pos - 1]
                    bufj[pos] = bufj[pos - 1]
                    pos -= 1
                bufd[pos] = d
                bufj[pos] = j
        for a in range(keep):
            out[i, a + 1] = bufj[a]
    return out_arr


def scatter_add(const Py_ssize_t[::1] idx, const double complex[::1] vals, Py_ssize_t size):
    out_arr = np.zeros(size, dtype=np.complex128)
    cdef double[::1] re = np.zeros(size, dtype=np.float64)
    cdef double[::1] im = np.zeros(size, dtype=np.float64)
    cdef Py_ssize_t t, q
    for t in range(idx.shape[0]):
        q = idx[t]
        re[q] += vals[t].real
        im[q] += vals[t].imag
    out_arr.real = re
    out_arr.imag = im
    return out_arr
