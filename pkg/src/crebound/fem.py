"""Linear triangle displacement solve for plane-stress elasticity.

Stress and strain use Voigt order ``[xx, yy, xy]`` with engineering shear
strain, so ``sigma = D @ eps`` and the energy density is ``sigma . eps``.
Global dof ``2 * node + c`` holds displacement component ``c`` of a node.
"""
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import quadrature
from .errors import ConfigError, SingularSystemError
from .mesh import Mesh

__all__ = [
    "Material",
    "LoadCase",
    "FemSolution",
    "assemble_solve",
    "energy_norm",
    "complementary_norm",
    "p1_gradients",
    "strain_matrices",
    "edge_traction_moments",
    "body_force_moments",
    "rigid_modes",
]

#: exactness of the rules used for prescribed load data
LOAD_EXACTNESS = 8
#: iterative refinement passes after the sparse direct solve
REFINEMENT_STEPS = 2


@dataclass(frozen=True)
class Material:
    """Isotropic plane-stress material."""

    young: float = 1.0
    poisson: float = 0.3

    def __post_init__(self):
        if not np.isfinite(self.young) or self.young <= 0:
            raise ConfigError(f"Young's modulus must be positive, got {self.young}")
        if not -1.0 < self.poisson < 0.5:
            raise ConfigError(f"Poisson ratio must lie in (-1, 0.5), got {self.poisson}")

    @property
    def D(self):
        E, nu = self.young, self.poisson
        return E / (1.0 - nu * nu) * np.array([[1.0, nu, 0.0],
                                               [nu, 1.0, 0.0],
                                               [0.0, 0.0, 0.5 * (1.0 - nu)]])

    @property
    def C(self):
        """Compliance, the inverse of :attr:`D`."""
        E, nu = self.young, self.poisson
        return np.array([[1.0, -nu, 0.0],
                         [-nu, 1.0, 0.0],
                         [0.0, 0.0, 2.0 * (1.0 + nu)]]) / E


def _as_field(value, ncomp=2):
    """Wrap a constant or callable into ``f(points) -> (n, ncomp)``."""
    if value is None:
        return None
    if callable(value):
        def fn(pts, _f=value):
            out = np.asarray(_f(np.asarray(pts, dtype=float)), dtype=float)
            return np.broadcast_to(out, (len(pts), ncomp))
        return fn
    const = np.asarray(value, dtype=float).reshape(ncomp)
    return lambda pts: np.broadcast_to(const, (len(pts), ncomp))


@dataclass(frozen=True)
class LoadCase:
    """Prescribed data keyed by boundary group name.

    ``tractions`` apply to every traction-loaded component of a group's
    edges (all of a neumann edge, the free component of a roller);
    ``displacements`` apply to the fixed components of dirichlet edges.
    Missing groups default to zero. Values are constants ``(fx, fy)`` or
    callables of ``(n, 2)`` points returning ``(n, 2)``.
    """

    tractions: Mapping = field(default_factory=dict)
    displacements: Mapping = field(default_factory=dict)
    body_force: object = None

    def traction(self, group):
        return _as_field(self.tractions.get(group))

    def displacement(self, group):
        return _as_field(self.displacements.get(group))

    @property
    def body(self):
        return _as_field(self.body_force)

    def check(self, mesh):
        known = set(mesh.groups)
        for name in list(self.tractions) + list(self.displacements):
            if name not in known:
                raise ConfigError(f"load given for unknown boundary group {name!r}; "
                                  f"mesh groups are {sorted(known)}")

    @property
    def homogeneous_dirichlet(self):
        for v in self.displacements.values():
            if callable(v) or np.any(np.asarray(v, dtype=float) != 0.0):
                return False
        return True


def p1_gradients(mesh):
    """Physical gradients of the barycentric functions, ``(nelem, 3, 2)``."""
    x = mesh.coords
    J = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.einsum("ak,ekj->eaj", ref, np.linalg.inv(J))


def _p1_gradients_ext(mesh):
    """:func:`p1_gradients` in extended precision, from explicit formulas."""
    x = mesh.coords.astype(np.longdouble)
    x0, x1, x2 = x[:, 0], x[:, 1], x[:, 2]
    det = ((x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1])
           - (x1[:, 1] - x0[:, 1]) * (x2[:, 0] - x0[:, 0]))
    gx = np.stack([x1[:, 1] - x2[:, 1], x2[:, 1] - x0[:, 1], x0[:, 1] - x1[:, 1]], axis=1)
    gy = np.stack([x2[:, 0] - x1[:, 0], x0[:, 0] - x2[:, 0], x1[:, 0] - x0[:, 0]], axis=1)
    return np.stack([gx, gy], axis=2) / det[:, None, None]


def strain_matrices(grads):
    """Voigt strain-displacement matrices ``(..., 3, 2 * nshape)``.

    ``grads`` has shape ``(..., nshape, 2)``; column ``2 a + c`` is component
    ``c`` of shape function ``a``.
    """
    shape = grads.shape[:-2]
    n = grads.shape[-2]
    B = np.zeros(shape + (3, 2 * n), dtype=grads.dtype)
    B[..., 0, 0::2] = grads[..., 0]
    B[..., 1, 1::2] = grads[..., 1]
    B[..., 2, 0::2] = grads[..., 1]
    B[..., 2, 1::2] = grads[..., 0]
    return B


def rigid_modes(points):
    """Rigid-body displacement fields at ``points``, ``(3, n, 2)``.

    Translations x and y, and a rotation about the centroid of the points.
    """
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    n = len(pts)
    out = np.zeros((3, n, 2))
    out[0, :, 0] = 1.0
    out[1, :, 1] = 1.0
    out[2, :, 0] = -(pts[:, 1] - c[1])
    out[2, :, 1] = pts[:, 0] - c[0]
    return out


def edge_traction_moments(mesh, loads):
    """``int_G F_d,c phi_a`` on each edge for both edge nodes, ``(nedge, 2, 2)``.

    Axis 1 runs over the edge's ``(low, high)`` nodes, axis 2 over
    components. Only traction-loaded components are nonzero.
    """
    out = np.zeros((mesh.n_edges, 2, 2))
    mask = mesh.neumann_mask
    rule = quadrature("edge", LOAD_EXACTNESS)
    t = rule.points[:, 0]
    phi = np.column_stack([1.0 - t, t])
    lengths = mesh.edge_lengths
    for gid, name in enumerate(mesh.groups):
        fn = loads.traction(name)
        if fn is None:
            continue
        sel = np.nonzero((mesh.edge_group == gid) & mask.any(axis=1))[0]
        if not len(sel):
            continue
        a = mesh.nodes[mesh.edges[sel, 0]]
        b = mesh.nodes[mesh.edges[sel, 1]]
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        vals = fn(pts.reshape(-1, 2)).reshape(len(sel), len(t), 2)
        m = np.einsum("q,qa,gqc->gac", rule.weights, phi, vals) * lengths[sel, None, None]
        out[sel] = m * mask[sel, None, :]
    return out


def body_force_moments(mesh, loads):
    """``int_E f_c lambda_a`` per element vertex, ``(nelem, 3, 2)``."""
    fn = loads.body
    if fn is None:
        return np.zeros((mesh.n_elements, 3, 2))
    rule = quadrature("triangle", LOAD_EXACTNESS)
    lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    x = mesh.coords
    pts = np.einsum("qa,ead->eqd", lam, x)
    vals = fn(pts.reshape(-1, 2)).reshape(mesh.n_elements, len(rule), 2)
    return np.einsum("q,qa,eqc->eac", rule.weights, lam, vals) * (2.0 * mesh.areas)[:, None, None]


def _dirichlet_values(mesh, loads):
    vals = np.zeros((mesh.n_nodes, 2))
    done = np.zeros((mesh.n_nodes, 2), dtype=bool)
    for gid, name in enumerate(mesh.groups):
        fn = loads.displacement(name)
        for c in range(2):
            sel = np.nonzero((mesh.edge_group == gid) & mesh.fixed[:, c])[0]
            nodes = np.unique(mesh.edges[sel].ravel())
            nodes = nodes[~done[nodes, c]]
            if not len(nodes):
                continue
            if fn is not None:
                vals[nodes, c] = fn(mesh.nodes[nodes])[:, c]
            done[nodes, c] = True
    return vals


@dataclass(frozen=True, eq=False)
class FemSolution:
    mesh: Mesh
    material: Material
    loads: LoadCase
    degree: int
    u: np.ndarray
    stress: np.ndarray
    energy_sq: float
    stiffness: sp.csr_matrix
    load: np.ndarray
    free: np.ndarray
    edge_moments: np.ndarray
    body_moments: np.ndarray

    @property
    def energy(self):
        """Energy norm of the FE displacement."""
        return float(np.sqrt(self.energy_sq))

    @property
    def strain(self):
        return self.stress @ self.material.C.T

    def residual(self):
        """Relative FE equilibrium residual over the free dofs."""
        r = self.stiffness @ self.u.ravel() - self.load
        scale = max(np.linalg.norm(self.load), np.linalg.norm(self.stiffness @ self.u.ravel()), 1e-300)
        return float(np.linalg.norm(r[self.free]) / scale)

    def reactions(self):
        r = self.stiffness @ self.u.ravel() - self.load
        r[self.free] = 0.0
        return r.reshape(-1, 2)


def _check_constraints(mesh):
    """Raise when the fixed dofs leave a rigid-body mode unconstrained."""
    R = rigid_modes(mesh.nodes)                       # (3, N, 2)
    rows = R[:, mesh.node_fixed]                      # (3, nfixed)
    rank = np.linalg.matrix_rank(rows.T, tol=1e-10 * max(1.0, np.abs(rows).max())) if rows.size else 0
    if rank < 3:
        raise SingularSystemError(
            f"displacement constraints leave {3 - rank} rigid-body mode(s) free; "
            "the stiffness matrix is singular")


def assemble_solve(mesh, material, loads, degree=1):
    """Solve the linear-triangle displacement problem.

    Fixed dofs are eliminated from the system, so prescribed values hold
    exactly and the residual on free dofs is at solver precision.
    """
    if degree != 1:
        raise ConfigError("the global solve supports degree 1 only")
    loads.check(mesh)
    _check_constraints(mesh)
    nn, ne = mesh.n_nodes, mesh.n_elements
    # the stiffness is assembled in extended precision: rounding in double
    # entries perturbs the rigid-body kernel, which large rotations of
    # slender parts amplify into visible energy errors
    Gx = _p1_gradients_ext(mesh)
    Bx = strain_matrices(Gx)
    area = mesh.areas
    D = material.D
    Kex = np.einsum("e,eki,kl,elj->eij", area.astype(np.longdouble), Bx,
                    D.astype(np.longdouble), Bx)
    dofs = (2 * mesh.triangles[:, :, None] + np.arange(2)).reshape(ne, 6)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    Kx = sp.coo_matrix((Kex.ravel(), (rows, cols)), shape=(2 * nn, 2 * nn)).tocsr()
    K = Kx.astype(float)
    B = strain_matrices(p1_gradients(mesh))

    edge_m = edge_traction_moments(mesh, loads)
    body_m = body_force_moments(mesh, loads)
    f = np.zeros((nn, 2))
    np.add.at(f, mesh.edges, edge_m)
    np.add.at(f, mesh.triangles, body_m)
    f = f.ravel()

    fixed = mesh.node_fixed.ravel()
    free = ~fixed
    u = _dirichlet_values(mesh, loads).ravel()
    rx = f[free].astype(np.longdouble) - Kx[free][:, fixed] @ u[fixed].astype(np.longdouble)
    Kffx = Kx[free][:, free]
    try:
        lu = spla.splu(Kffx.astype(float).tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from None
    # iterative refinement against the extended-precision operator
    ux = lu.solve(np.asarray(rx, dtype=float)).astype(np.longdouble)
    for _ in range(REFINEMENT_STEPS):
        ux += lu.solve(np.asarray(rx - Kffx @ ux, dtype=float))
    uf = np.asarray(ux, dtype=float)
    if not np.all(np.isfinite(uf)):
        raise SingularSystemError("sparse factorization produced non-finite values")
    u[free] = uf
    ue = u[dofs]
    stress = np.einsum("kl,elj,ej->ek", D, B, ue)
    strain = np.einsum("elj,ej->el", B, ue)
    energy_sq = float(np.sum(area * np.einsum("ek,ek->e", stress, strain)))
    return FemSolution(mesh=mesh, material=material, loads=loads, degree=1,
                       u=u.reshape(nn, 2), stress=stress, energy_sq=energy_sq,
                       stiffness=K, load=f, free=free, edge_moments=edge_m,
                       body_moments=body_m)


def energy_norm(mesh, material, field):
    """Energy norm of a linear nodal displacement field ``(nnode, 2)``.

    Returns ``(norm, per_element)`` where ``per_element`` holds the element
    contributions whose squares sum to ``norm ** 2``.
    """
    u = np.asarray(field, dtype=float).reshape(mesh.n_nodes, 2)
    B = strain_matrices(p1_gradients(mesh))
    eps = np.einsum("elj,ej->el", B, u[mesh.triangles].reshape(-1, 6))
    dens = np.einsum("ek,kl,el->e", eps, material.D, eps)
    local = np.sqrt(np.maximum(dens, 0.0) * mesh.areas)
    return float(np.sqrt(np.sum(local ** 2))), local


def complementary_norm(mesh, material, stress, rule=None):
    """Complementary energy norm of a stress field.

    ``stress`` is either constant per element ``(nelem, 3)`` or sampled at the
    points of a triangle quadrature ``rule`` as ``(nelem, npts, 3)``.
    Returns ``(norm, per_element)`` like :func:`energy_norm`.
    """
    s = np.asarray(stress, dtype=float)
    C = material.C
    if s.ndim == 2:
        dens = np.einsum("ek,kl,el->e", s, C, s) * mesh.areas
    else:
        if rule is None:
            raise ValueError("sampled stresses need the quadrature rule")
        dens = np.einsum("q,eqk,kl,eql->e", rule.weights, s, C, s) * (2.0 * mesh.areas)
    local = np.sqrt(np.maximum(dens, 0.0))
    return float(np.sqrt(np.sum(local ** 2))), local
