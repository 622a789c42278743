"""Pure-Python versions of the per-patch kernels in ``_ckernels.pyx``."""
import numpy as np


def patch_operator(edge_nodes, edge_lengths, triangles, local_col, eta):
    """Edge-traction / broken-test-field coupling matrix of one vertex patch.

    Parameters
    ----------
    edge_nodes : (nj, 2) int
        Low and high node of every patch edge.
    edge_lengths : (nj,) float
    triangles : (ne, 3) int
        Node numbers of the patch elements.
    local_col : (ne, 3) int
        Patch-edge index of each local element edge, -1 if the edge does
        not touch the vertex.
    eta : (ne, 3) float
        Orientation signs of the local edges.

    Returns
    -------
    A : (4 nj, 6 ne) ndarray
    """
    nj, ne = len(edge_nodes), len(triangles)
    A = np.zeros((4 * nj, 6 * ne))
    for el in range(ne):
        tri = triangles[el]
        for k in range(3):
            j = local_col[el, k]
            if j < 0:
                continue
            scale = eta[el, k] * edge_lengths[j] / 6.0
            for b in (k, (k + 1) % 3):
                for a in range(2):
                    w = 2.0 if edge_nodes[j, a] == tri[b] else 1.0
                    for c in range(2):
                        A[4 * j + 2 * a + c, 6 * el + 2 * b + c] += scale * w
    return A


def independent_rows(N, tol=1e-8):
    """First rows of ``N``, in order, that together have full column rank.

    Rows are taken greedily: a row is kept when its component orthogonal to
    the rows kept so far exceeds ``tol``. ``N`` is expected to have
    orthonormal columns, so ``tol`` is absolute.
    """
    N = np.asarray(N, dtype=float)
    n, k = N.shape
    kept = []
    Q = np.zeros((k, k))
    for d in range(n):
        if len(kept) == k:
            break
        v = N[d].copy()
        m = len(kept)
        for _ in range(2):
            v -= Q[:m].T @ (Q[:m] @ v)
        norm = np.linalg.norm(v)
        if norm > tol:
            Q[m] = v / norm
            kept.append(d)
    return np.array(kept, dtype=np.intp)
