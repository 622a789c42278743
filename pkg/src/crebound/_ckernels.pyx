# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-patch kernels; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def patch_operator(const cnp.int64_t[:, ::1] edge_nodes, const double[::1] edge_lengths,
                   const cnp.int64_t[:, ::1] triangles, const cnp.int64_t[:, ::1] local_col,
                   const double[:, ::1] eta):
    cdef Py_ssize_t nj = edge_nodes.shape[0], ne = triangles.shape[0]
    cdef Py_ssize_t el, k, bi, b, a, c, j
    cdef double scale, w
    out = np.zeros((4 * nj, 6 * ne))
    cdef double[:, ::1] A = out
    for el in range(ne):
        for k in range(3):
            j = local_col[el, k]
            if j < 0:
                continue
            scale = eta[el, k] * edge_lengths[j] / 6.0
            for bi in range(2):
                b = (k + bi) % 3
                for a in range(2):
                    w = 2.0 if edge_nodes[j, a] == triangles[el, b] else 1.0
                    for c in range(2):
                        A[4 * j + 2 * a + c, 6 * el + 2 * b + c] += scale * w
    return out


def independent_rows(N, double tol=1e-8):
    cdef double[:, ::1] M = np.ascontiguousarray(N, dtype=float)
    cdef Py_ssize_t n = M.shape[0], k = M.shape[1]
    cdef Py_ssize_t d, i, p, q, m = 0, sweep
    cdef double dot, norm
    Qa = np.zeros((max(k, 1), max(k, 1)))
    va = np.zeros(max(k, 1))
    cdef double[:, ::1] Q = Qa
    cdef double[::1] v = va
    kept = []
    for d in range(n):
        if m == k:
            break
        for i in range(k):
            v[i] = M[d, i]
        for sweep in range(2):
            for p in range(m):
                dot = 0.0
                for i in range(k):
                    dot += Q[p, i] * v[i]
                for i in range(k):
                    v[i] -= dot * Q[p, i]
        norm = 0.0
        for i in range(k):
            norm += v[i] * v[i]
        norm = sqrt(norm)
        if norm > tol:
            for i in range(k):
                Q[m, i] = v[i] / norm
            m += 1
            kept.append(d)
    return np.array(kept, dtype=np.intp)
