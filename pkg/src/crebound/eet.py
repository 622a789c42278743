"""Element equilibration: node-wise traction projections and recovery.

For node ``i`` the unknowns are the edge moments ``b_G = int_G F lambda_i``
of the equilibrated traction on every edge through ``i``. Each element
around the node contributes one vector equation

    sum_G eta_E b_G = Q_E,   Q_E = int_E sigma_h grad(lambda_i) - f lambda_i,

and traction-loaded edge components pin ``b_G`` to the boundary data.
When the fan equations are dependent (the node component is not fixed)
the equation of the highest-index element is dropped for that component.
Remaining freedom is removed by a weighted least-squares fit to the
projected FE stress vectors.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .equil import (CostKind, TractionField, all_node_load_vectors, cost_weight,
                    edge_mass, fe_stress_projections, solve_kkt)
from .errors import CompatibilityError, SingularSystemError

__all__ = ["NodeSystem", "build_node_system", "solve_node_system",
           "recover_tractions", "run_eet", "COMPAT_TOL"]

COMPAT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NodeSystem:
    node: int
    edges: np.ndarray
    elements: np.ndarray
    B: np.ndarray             # prolongation rows over the unknowns
    Q: np.ndarray
    C: np.ndarray             # boundary-data rows
    q: np.ndarray
    target: np.ndarray
    M: np.ndarray
    dropped: tuple            # (element, component) rows removed as dependent
    truncated: tuple = ()     # rows removed to keep the system square

    @property
    def n_unk(self):
        return self.B.shape[1]

    @property
    def n_ind(self):
        return self.B.shape[0]

    @property
    def n_enf(self):
        return self.C.shape[0]

    def constraint_residual(self, b_hat):
        r = np.concatenate([self.B @ b_hat - self.Q, self.C @ b_hat - self.q])
        scale = max(np.abs(self.Q).max(initial=0.0), np.abs(self.q).max(initial=0.0),
                    np.abs(b_hat).max(initial=0.0), 1e-300)
        return float(np.abs(r).max(initial=0.0) / scale)


def _node_position(mesh, edges, node):
    """Index 0 or 1 of ``node`` within each canonical edge."""
    return (mesh.edges[edges, 1] == node).astype(int)


def build_node_system(solution, node, cost="J0", *, loads=None, projections=None):
    """Assemble the traction projection system of one node.

    ``loads`` and ``projections`` accept precomputed
    :func:`all_node_load_vectors` and :func:`fe_stress_projections` arrays.
    """
    mesh = solution.mesh
    if loads is None:
        loads = all_node_load_vectors(solution)
    if projections is None:
        projections = fe_stress_projections(solution)
    edges = mesh.node_edges[node]
    elems = mesh.node_elems[node]
    nj = len(edges)
    col = {int(g): j for j, g in enumerate(edges)}
    pos = _node_position(mesh, edges, node)

    rows, rhs, tags = [], [], []
    for e in elems:
        a = int(np.nonzero(mesh.triangles[e] == node)[0][0])
        for c in range(2):
            row = np.zeros(2 * nj)
            for k in range(3):
                g = mesh.elem_edges[e, k]
                if g in col:
                    row[2 * col[g] + c] = mesh.eta[e, k]
            rows.append(row)
            rhs.append(loads[e, a, c])
            tags.append((int(e), c))

    # boundary data on traction-loaded components
    moments = solution.edge_moments
    crow, cq = [], []
    for j, g in enumerate(edges):
        for c in range(2):
            if mesh.neumann_mask[g, c]:
                row = np.zeros(2 * nj)
                row[2 * j + c] = 1.0
                crow.append(row)
                cq.append(moments[g, pos[j], c])

    # the fan equations sum to the boundary data for a free node component
    dropped = []
    last = int(elems.max())
    for c in range(2):
        if mesh.node_fixed[node, c]:
            continue
        total = sum(r for (e, cc), r in zip(tags, rhs) if cc == c)
        data = sum(moments[g, pos[j], c] for j, g in enumerate(edges) if mesh.neumann_mask[g, c])
        scale = max(np.abs(loads).max(), 1e-300)
        if abs(total - data) > COMPAT_TOL * scale:
            raise CompatibilityError(
                f"node {node} component {c}: element loads sum to {total:.6e} but the "
                f"boundary data gives {data:.6e}; the FE solution is not in equilibrium")
        dropped.append((last, c))
    keep = [k for k, t in enumerate(tags) if t not in dropped]
    B = np.array([rows[k] for k in keep]).reshape(-1, 2 * nj)
    Q = np.array([rhs[k] for k in keep])
    kept_tags = [tags[k] for k in keep]
    C = np.array(crow).reshape(-1, 2 * nj)
    q = np.array(cq)

    # boundary data has priority; extra fan rows go, highest element first
    truncated = []
    room = 2 * nj - len(q)
    if len(Q) > room:
        order = sorted(range(len(Q)), key=lambda k: (-kept_tags[k][0], -kept_tags[k][1]))
        gone = set(order[:len(Q) - room])
        truncated = [kept_tags[k] for k in sorted(gone)]
        stay = [k for k in range(len(Q)) if k not in gone]
        B, Q = B[stay].reshape(-1, 2 * nj), Q[stay]

    lengths = mesh.edge_lengths[edges]
    mass_row = edge_mass(lengths)[np.arange(nj), pos]        # (nj, 2)
    target = np.einsum("ja,jac->jc", mass_row, projections[edges]).ravel()
    W = cost_weight(cost, mesh, solution.material, edges)
    M = sla.block_diag(*W)
    return NodeSystem(node=int(node), edges=edges, elements=elems, B=B, Q=Q, C=C, q=q,
                      target=target, M=M, dropped=tuple(dropped), truncated=tuple(truncated))


def solve_node_system(system, tol=1e-10):
    """Projection moments ``b_hat`` of one node, stacked per edge then component."""
    G = np.vstack([system.C, system.B])
    g = np.concatenate([system.q, system.Q])
    n, m = system.n_unk, len(g)
    try:
        if n > m:
            b_hat = solve_kkt(system.M, G, system.M @ system.target, g)
        else:
            b_hat = sla.solve(G, g)
    except (sla.LinAlgError, ValueError, SingularSystemError) as exc:
        raise SingularSystemError(f"node {system.node}: {exc}") from None
    if not np.all(np.isfinite(b_hat)):
        raise SingularSystemError(f"node {system.node}: singular projection system")
    res = system.constraint_residual(b_hat)
    if res > tol:
        raise SingularSystemError(
            f"node {system.node}: constraint residual {res:.3e} exceeds {tol:.0e}")
    return b_hat


def recover_tractions(solution, projections):
    """Edge tractions from node moments.

    ``projections`` maps node -> ``b_hat`` as returned by
    :func:`solve_node_system` (ordered like ``mesh.node_edges[node]``).
    """
    mesh = solution.mesh
    moments = np.zeros((mesh.n_edges, 2, 2))
    for node, b_hat in projections.items():
        edges = mesh.node_edges[node]
        pos = _node_position(mesh, edges, node)
        moments[edges, pos] = np.asarray(b_hat).reshape(-1, 2)
    return TractionField(mesh, np.linalg.solve(edge_mass(mesh.edge_lengths), moments))


def run_eet(solution, cost="J0"):
    """Build and solve every node system and return the traction field."""
    cost = CostKind.parse(cost)
    loads = all_node_load_vectors(solution)
    proj = fe_stress_projections(solution)
    out = {}
    for i in range(solution.mesh.n_nodes):
        system = build_node_system(solution, i, cost, loads=loads, projections=proj)
        out[i] = solve_node_system(system)
    return recover_tractions(solution, out)
