"""Edge tractions and projections shared by the traction-based methods.

Edge quantities are stored in the canonical edge orientation: a traction
coefficient is the stress vector acting on the lower-index neighbour, and
an element reads it through its ``eta`` sign. Linear edge fields are stored
by their values at the ``(low, high)`` edge nodes, shape ``(nedge, 2, 2)``
with components last.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .basis import LOCAL_EDGES
from .errors import ConfigError, SingularSystemError
from .fem import p1_gradients

__all__ = [
    "CostKind",
    "TractionField",
    "cost_weight",
    "local_edge_flips",
    "stress_vectors",
    "fe_stress_projection",
    "fe_stress_projections",
    "node_load_vectors",
    "all_node_load_vectors",
    "neumann_projection",
    "edge_mass",
    "solve_kkt",
]


KKT_REFINEMENT_STEPS = 2


class CostKind(str, Enum):
    J0 = "J0"
    J1 = "J1"
    J2 = "J2"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown cost function {value!r}; use J0, J1 or J2") from None


def solve_kkt(H, G, c, g):
    """Minimize ``x.H.x / 2 - c.x`` subject to ``G x = g``.

    The saddle-point matrix is scaled symmetrically (unit diagonal on the
    weight block, unit-norm constraint rows) before a dense LU solve with
    iterative refinement; weights spanning several decades, as with a
    penalty, would otherwise wreck the pivoting.
    """
    n, m = H.shape[0], G.shape[0]
    sx = 1.0 / np.sqrt(np.diag(H))
    Gs = G * sx[None, :]
    norms = np.linalg.norm(Gs, axis=1)
    if m and norms.min() == 0.0:
        raise SingularSystemError("empty constraint row")
    sy = 1.0 / norms
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H * sx[:, None] * sx[None, :]
    K[:n, n:] = (Gs * sy[:, None]).T
    K[n:, :n] = Gs * sy[:, None]
    rhs = np.concatenate([c * sx, g * sy])
    try:
        lu = sla.lu_factor(K, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from None
    if np.any(np.diag(lu[0]) == 0.0):
        raise SingularSystemError("singular saddle-point matrix")
    y = sla.lu_solve(lu, rhs, check_finite=False)
    for _ in range(KKT_REFINEMENT_STEPS):
        y += sla.lu_solve(lu, rhs - K @ y, check_finite=False)
    return y[:n] * sx


def edge_mass(lengths):
    """Linear edge mass matrices ``(nedge, 2, 2)``."""
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return np.asarray(lengths, dtype=float)[:, None, None] * base


def cost_weight(kind, mesh, material, edges=None):
    """Per-component weight ``(n, 2, 2)`` of the least-squares cost on edges.

    J0 weighs every traction coefficient equally, J1 divides by the squared
    edge length, J2 splits the normal and tangential parts with elastic
    energy coefficients.
    """
    kind = CostKind.parse(kind)
    edges = np.arange(mesh.n_edges) if edges is None else np.asarray(edges)
    n = len(edges)
    eye = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    if kind is CostKind.J0:
        return eye
    l2 = mesh.edge_lengths[edges] ** 2
    if kind is CostKind.J1:
        return eye / l2[:, None, None]
    E, nu = material.young, material.poisson
    nrm = mesh.edge_normals[edges]
    nn = np.einsum("ei,ej->eij", nrm, nrm)
    w = (1.0 + nu) / E * ((1.0 - 2.0 * nu) / (1.0 - nu) * nn + 2.0 * (eye - nn))
    return w / l2[:, None, None]


def local_edge_flips(mesh):
    """True where local edge k of an element runs from high to low node."""
    start = mesh.triangles[:, LOCAL_EDGES[:, 0]]
    return start != mesh.edges[mesh.elem_edges, 0]


def stress_vectors(stress, normals):
    """``sigma . n`` for Voigt stresses ``(..., 3)`` and normals ``(..., 2)``."""
    sx, sy, sxy = stress[..., 0], stress[..., 1], stress[..., 2]
    nx, ny = normals[..., 0], normals[..., 1]
    return np.stack([sx * nx + sxy * ny, sxy * nx + sy * ny], axis=-1)


def neumann_projection(mesh, moments):
    """Linear edge field whose moments against the edge hat functions match.

    ``moments`` is ``(nedge, 2, 2)`` as returned by ``edge_traction_moments``.
    """
    return np.linalg.solve(edge_mass(mesh.edge_lengths), moments)


def fe_stress_projections(solution):
    """FE stress-vector projection on every edge, ``(nedge, 2, 2)``.

    Interior edges average the two one-sided stress vectors; edges on the
    fixed part use the single neighbour; traction-loaded components take
    the projected boundary data.
    """
    mesh = solution.mesh
    nrm = mesh.edge_normals
    lo, hi = mesh.edge_elems[:, 0], mesh.edge_elems[:, 1]
    t = stress_vectors(solution.stress[lo], nrm)
    inner = hi >= 0
    t[inner] = 0.5 * (t[inner] + stress_vectors(solution.stress[hi[inner]], nrm[inner]))
    proj = np.repeat(t[:, None, :], 2, axis=1)
    data = neumann_projection(mesh, solution.edge_moments)
    mask = mesh.neumann_mask
    proj = np.where(mask[:, None, :], data, proj)
    return proj


def fe_stress_projection(solution, edge):
    """Projection on one edge, ``(2, 2)``: edge nodes by components."""
    return fe_stress_projections(solution)[edge]


def all_node_load_vectors(solution):
    """``int_E sigma_h grad(lambda_a) - f lambda_a`` for every element vertex.

    Shape ``(nelem, 3, 2)``.
    """
    mesh = solution.mesh
    G = p1_gradients(mesh)
    s = solution.stress
    tens = np.stack([np.stack([s[:, 0], s[:, 2]], axis=1),
                     np.stack([s[:, 2], s[:, 1]], axis=1)], axis=1)  # (ne, 2, 2)
    Q = np.einsum("eij,eaj->eai", tens, G) * mesh.areas[:, None, None]
    return Q - solution.body_moments


def node_load_vectors(solution, node):
    """Map element -> load vector of ``node`` for the elements around it."""
    mesh = solution.mesh
    Q = all_node_load_vectors(solution)
    out = {}
    for e in mesh.node_elems[node]:
        a = int(np.nonzero(mesh.triangles[e] == node)[0][0])
        out[int(e)] = Q[e, a]
    return out


@dataclass(frozen=True, eq=False)
class TractionField:
    """Linear tractions on every edge in canonical orientation."""

    mesh: object
    coeffs: np.ndarray

    def element_nodal_forces(self):
        """``int_dE eta F . lambda_a`` per element vertex, ``(nelem, 3, 2)``."""
        mesh = self.mesh
        flips = local_edge_flips(mesh)
        c = self.coeffs[mesh.elem_edges]                  # (ne, 3, 2, 2) canonical
        c = np.where(flips[:, :, None, None], c[:, :, ::-1], c)   # local order
        l = mesh.edge_lengths[mesh.elem_edges] * mesh.eta
        f_start = l[:, :, None] / 6.0 * (2.0 * c[:, :, 0] + c[:, :, 1])
        f_end = l[:, :, None] / 6.0 * (c[:, :, 0] + 2.0 * c[:, :, 1])
        out = np.zeros((mesh.n_elements, 3, 2))
        for k, (a, b) in enumerate(LOCAL_EDGES):
            out[:, a] += f_start[:, k]
            out[:, b] += f_end[:, k]
        return out

    def local_values(self):
        """Tractions seen by each element, ``(nelem, 3, 2, 2)``.

        Axis 2 runs over the start and end vertex of the local edge, and the
        values already carry the element's ``eta`` sign.
        """
        mesh = self.mesh
        flips = local_edge_flips(mesh)
        c = self.coeffs[mesh.elem_edges]
        c = np.where(flips[:, :, None, None], c[:, :, ::-1], c)
        return c * mesh.eta[:, :, None, None]

    def equilibrium_residuals(self, body_moments):
        """Relative rigid-body residual per element.

        Each element's three residuals (two forces, one moment about the
        centroid) are scaled by the magnitude of the loads acting on it.
        """
        mesh = self.mesh
        F = self.element_nodal_forces() + body_moments
        x = mesh.coords
        r = x - x.mean(axis=1, keepdims=True)
        res = np.stack([F[:, :, 0].sum(axis=1), F[:, :, 1].sum(axis=1),
                        (r[:, :, 0] * F[:, :, 1] - r[:, :, 1] * F[:, :, 0]).sum(axis=1)], axis=1)
        h = mesh.edge_lengths[mesh.elem_edges].max(axis=1)
        mag = (np.abs(self.element_nodal_forces()).sum(axis=(1, 2))
               + np.abs(body_moments).sum(axis=(1, 2)))
        scale = np.maximum(mag, 1e-12 * mag.max() + 1e-300)
        res[:, 2] /= h
        return np.linalg.norm(res, axis=1) / scale

    def neumann_mismatch(self, solution):
        """Largest deviation from the projected traction data, relative."""
        mesh = self.mesh
        data = neumann_projection(mesh, solution.edge_moments)
        mask = np.broadcast_to(mesh.neumann_mask[:, None, :], self.coeffs.shape)
        if not mask.any():
            return 0.0
        diff = np.abs(self.coeffs - data)[mask].max()
        ref = max(np.abs(data[mask]).max(), np.abs(solution.stress).max(), 1e-300)
        return float(diff / ref)
