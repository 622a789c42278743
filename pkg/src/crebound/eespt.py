"""Hybrid element/star-patch traction equilibration (linear tractions).

For vertex ``i`` the unknowns are the linear edge fields
``f_G = lambda_i F^(i)`` on every edge through ``i``, stored as values at
the edge's ``(low, high)`` nodes per component: index ``4 j + 2 a + c``.
Test fields are broken linear on the patch elements, index ``6 e + 2 b + c``
for the ``e``-th patch element, local vertex ``b`` and component ``c``.
The patch equations read

    sum_G int_G f_G . (sum_E eta_E v_E) = sum_E Q_E^(i) . v_E(x_i),

whose right side keeps only each element's value at the vertex. Test
fields the left side cannot see (the kernel) are removed by fixing test
dofs. Tractions minimize a weighted distance to per-edge targets, with a
large weight on traction-loaded components in place of hard constraints.
"""
from dataclasses import dataclass

import numpy as np

from .equil import (CostKind, TractionField, all_node_load_vectors, cost_weight,
                    fe_stress_projections, solve_kkt)
from .errors import CompatibilityError, SingularSystemError
from .kernels import independent_rows, patch_operator

__all__ = ["PatchTractionSystem", "edge_targets", "build_targets", "build_patch_system",
           "solve_patch_system", "recover_tractions", "run_eespt", "DEFAULT_PENALTY"]

DEFAULT_PENALTY = 1e5
COMPAT_TOL = 1e-8


def edge_targets(projection, length=1.0):
    """Split a linear edge field between the two edge vertices.

    ``projection`` holds the values ``(..., 2, 2)`` at the low and high
    node. Returns ``(..., 2, 2, 2)``: for vertex ``a`` (0 = low, 1 = high)
    the nodal values of its share ``g_a``, where ``g_low + g_high =
    projection`` and ``int g_a lambda_b = 0`` for the other vertex ``b``.
    The conditions are assembled as one 8 x 8 system per edge and solved
    densely.
    """
    projection = np.asarray(projection, dtype=float)
    batch = projection.shape[:-2]
    length = np.broadcast_to(np.asarray(length, dtype=float), batch)
    A = np.zeros(batch + (8, 8))
    b = np.zeros(batch + (8,))
    m01, m11 = length / 6.0, length / 3.0          # (l/6)[[2, 1], [1, 2]]
    # unknowns: g_low(node 0, node 1) then g_high(node 0, node 1), per component
    row = 0
    for c in range(2):
        off_lo, off_hi = c, 4 + c
        # sum of the shares at each node
        for node in range(2):
            A[..., row, off_lo + 2 * node] = 1.0
            A[..., row, off_hi + 2 * node] = 1.0
            b[..., row] = projection[..., node, c]
            row += 1
        # share of the low vertex orthogonal to the high hat, and vice versa
        A[..., row, off_lo + 0] = m01
        A[..., row, off_lo + 2] = m11
        row += 1
        A[..., row, off_hi + 0] = m11
        A[..., row, off_hi + 2] = m01
        row += 1
    x = np.linalg.solve(A, b[..., None])[..., 0]
    return x.reshape(batch + (2, 2, 2))


def build_targets(solution, vertex, projections=None, shares=None):
    """Targets ``(nedge_i, 2, 2)`` for the edges through ``vertex``.

    ``shares`` may carry :func:`edge_targets` of every edge, precomputed.
    """
    mesh = solution.mesh
    edges = mesh.node_edges[vertex]
    if shares is None:
        if projections is None:
            projections = fe_stress_projections(solution)
        shares = edge_targets(projections[edges], mesh.edge_lengths[edges])
    else:
        shares = shares[edges]
    a = (mesh.edges[edges, 1] == vertex).astype(int)
    return shares[np.arange(len(edges)), a]


@dataclass(frozen=True, eq=False)
class PatchTractionSystem:
    vertex: int
    edges: np.ndarray
    elements: np.ndarray
    A: np.ndarray            # (n_unknown, n_test) before fixing
    R: np.ndarray            # (n_test,)
    fixed: np.ndarray        # test dofs removed to fix the kernel
    retained: np.ndarray
    kernel: np.ndarray       # (n_test, kernel dim) orthonormal basis
    target: np.ndarray       # (n_unknown,)
    P: np.ndarray
    penalized: np.ndarray    # (n_unknown,) traction-loaded coefficients
    load_scale: float = 0.0  # largest nodal load of the whole mesh

    @property
    def A_red(self):
        return self.A[:, self.retained]

    @property
    def R_red(self):
        return self.R[self.retained]

    def constraint_residual(self, f_hat):
        """Largest patch-equation residual, relative to the load magnitudes.

        The equations on the fixed test dofs hold only up to the global
        solve's round-off, which is measured against the largest load of
        the whole mesh rather than the possibly tiny local ones.
        """
        r = self.A.T @ f_hat - self.R
        scale = max(np.abs(self.R).max(initial=0.0), self.load_scale,
                    np.abs(self.A).max() * np.abs(f_hat).max(initial=0.0), 1e-300)
        return float(np.abs(r).max(initial=0.0) / scale)


def _patch_operator(mesh, vertex, edges, elems):
    col = np.full(mesh.n_edges, -1, dtype=np.int64)
    col[edges] = np.arange(len(edges))
    return patch_operator(np.ascontiguousarray(mesh.edges[edges], dtype=np.int64),
                          np.ascontiguousarray(mesh.edge_lengths[edges]),
                          np.ascontiguousarray(mesh.triangles[elems], dtype=np.int64),
                          np.ascontiguousarray(col[mesh.elem_edges[elems]]),
                          np.ascontiguousarray(mesh.eta[elems], dtype=float))


def _fix_kernel(N, tol=1e-8):
    """Greedy lexicographic choice of test dofs pinning the kernel basis ``N``."""
    fixed = independent_rows(N, tol)
    if len(fixed) < N.shape[1]:
        raise SingularSystemError("could not fix the kernel of the patch operator")
    return fixed


def build_patch_system(solution, vertex, cost="J0", penalty=DEFAULT_PENALTY, *,
                       loads=None, projections=None, shares=None):
    """Assemble the traction system of one vertex patch."""
    mesh = solution.mesh
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    if loads is None:
        loads = all_node_load_vectors(solution)
    edges = mesh.node_edges[vertex]
    elems = mesh.node_elems[vertex]
    A = _patch_operator(mesh, vertex, edges, elems)

    R = np.zeros(6 * len(elems))
    for el, e in enumerate(elems):
        b = int(np.nonzero(mesh.triangles[e] == vertex)[0][0])
        R[6 * el + 2 * b:6 * el + 2 * b + 2] = loads[e, b]

    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-10 * sv.max()))
    N = vt[rank:].T
    compat = np.abs(R @ N).max(initial=0.0)
    if compat > COMPAT_TOL * max(np.abs(loads).max(), 1e-300):
        raise CompatibilityError(
            f"vertex {vertex}: patch loads act on invisible test fields ({compat:.3e}); "
            "the FE solution is not in equilibrium")
    fixed = _fix_kernel(N)
    retained = np.setdiff1d(np.arange(A.shape[1]), fixed)

    target = build_targets(solution, vertex, projections, shares).reshape(-1)
    W = cost_weight(cost, mesh, solution.material, edges)            # (nj, 2, 2)
    pen = np.repeat(mesh.neumann_mask[edges][:, None, :], 2, axis=1).reshape(-1)
    Dg = np.where(pen, np.sqrt(penalty), 1.0)
    nj = len(edges)
    P = np.zeros((nj, 2, 2, nj, 2, 2))
    idx = np.arange(nj)
    # block j is kron(I_2, W_j): node-major, component-minor
    for a in range(2):
        P[idx, a, :, idx, a, :] = W
    P = P.reshape(4 * nj, 4 * nj)
    P = Dg[:, None] * P * Dg[None, :]
    return PatchTractionSystem(vertex=int(vertex), edges=edges, elements=elems, A=A, R=R,
                               fixed=fixed, retained=retained, kernel=N, target=target,
                               P=P, penalized=pen, load_scale=float(np.abs(loads).max()))


def solve_patch_system(system, tol=1e-10):
    """Minimize the weighted target distance subject to the patch equations."""
    try:
        f_hat = solve_kkt(system.P, system.A_red.T, system.P @ system.target, system.R_red)
    except SingularSystemError as exc:
        raise SingularSystemError(f"vertex {system.vertex}: {exc}") from None
    if not np.all(np.isfinite(f_hat)):
        raise SingularSystemError(f"vertex {system.vertex}: singular traction system")
    res = system.constraint_residual(f_hat)
    if res > tol:
        raise SingularSystemError(
            f"vertex {system.vertex}: constraint residual {res:.3e} exceeds {tol:.0e}")
    return f_hat


def recover_tractions(solution, solutions):
    """Sum the vertex shares on every edge; ``solutions`` maps vertex -> f_hat."""
    mesh = solution.mesh
    coeffs = np.zeros((mesh.n_edges, 2, 2))
    for vertex, f_hat in solutions.items():
        edges = mesh.node_edges[vertex]
        np.add.at(coeffs, edges, np.asarray(f_hat).reshape(-1, 2, 2))
    return TractionField(mesh, coeffs)


def run_eespt(solution, cost="J0", penalty=DEFAULT_PENALTY):
    """Solve every vertex patch and return the recovered traction field."""
    cost = CostKind.parse(cost)
    loads = all_node_load_vectors(solution)
    proj = fe_stress_projections(solution)
    shares = edge_targets(proj, solution.mesh.edge_lengths)
    out = {}
    for i in range(solution.mesh.n_nodes):
        system = build_patch_system(solution, i, cost, penalty, loads=loads, shares=shares)
        out[i] = solve_patch_system(system)
    return recover_tractions(solution, out)
