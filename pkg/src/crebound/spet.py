"""Star-patch equilibration (flux-free patch problems).

For every vertex ``i`` a displacement correction ``e_i`` is sought in the
degree-d hierarchical space on the vertex patch, vanishing on fixed
components, with

    a(e_i, v) = R_h(lambda_i (v - I v))   for all v,

where ``I`` is linear interpolation and ``R_h`` the FE residual. The
interpolation removes the vertex modes from the right-hand side, which
makes it vanish on rigid motions, so unconstrained patches stay solvable.
Summing the corrections gives an equilibrated stress
``sigma_h + D eps(sum_i e_i)``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import hierarchical_layout, quadrature
from .errors import SingularSystemError
from .fem import LOAD_EXACTNESS, p1_gradients
from .local import AdmissibleStress, LocalSpace

__all__ = ["PatchSolution", "element_dof_map", "fixed_scalar_dofs", "element_residual_loads",
           "patch_rhs", "solve_patch", "spet_estimate", "run_spet"]


def element_dof_map(mesh, degree):
    """Global scalar dof of every element mode, ``(nelem, nf)``.

    Vertices come first, then ``degree - 1`` modes per edge, then bubbles.
    """
    _, per_edge, n_bub = hierarchical_layout(degree)
    nn, ne, nk = mesh.n_nodes, mesh.n_elements, mesh.n_edges
    parts = [mesh.triangles]
    for k in range(3):
        parts.append(nn + mesh.elem_edges[:, k:k + 1] * per_edge + np.arange(per_edge))
    parts.append(nn + nk * per_edge + np.arange(ne)[:, None] * n_bub + np.arange(n_bub))
    return np.concatenate(parts, axis=1)


def fixed_scalar_dofs(mesh, degree):
    """``(ndof, 2)`` mask of globally fixed scalar dofs per component."""
    _, per_edge, n_bub = hierarchical_layout(degree)
    nn, ne, nk = mesh.n_nodes, mesh.n_elements, mesh.n_edges
    out = np.zeros((nn + nk * per_edge + ne * n_bub, 2), dtype=bool)
    out[:nn] = mesh.node_fixed
    out[nn:nn + nk * per_edge] = np.repeat(mesh.fixed, per_edge, axis=0)
    return out


def element_residual_loads(solution, space):
    """``R_h(lambda_a psi)`` restricted to each element, ``(nelem, 3, 2 nf)``.

    ``a`` runs over the element vertices and ``psi`` over the vector modes of
    ``space``: ``-int sigma_h : eps(lambda_a psi) + int f . lambda_a psi`` plus
    the boundary data on traction-loaded edge components.
    """
    mesh = solution.mesh
    ne, nf = mesh.n_elements, space.nf
    rule = quadrature("triangle", space.degree + 1 + LOAD_EXACTNESS)
    vals, grads = space.basis.eval(rule.points)
    lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    Gl = p1_gradients(mesh)                                          # (ne, 3, 2)
    Gp = np.einsum("qia,eak->eqik", grads, space.inv_jacobians)      # (ne, q, nf, 2)
    w = rule.weights * 1.0
    area2 = 2.0 * mesh.areas
    # grad(lambda_a phi_j) = phi_j grad(lambda_a) + lambda_a grad(phi_j)
    I1 = np.einsum("q,qj,eak->eajk", w, vals, Gl, optimize=True)
    I2 = np.einsum("q,qa,eqjk->eajk", w, lam, Gp, optimize=True)
    gint = (I1 + I2) * area2[:, None, None, None]                    # (ne, 3, nf, 2)
    s = solution.stress
    tens = np.stack([np.stack([s[:, 0], s[:, 2]], axis=1),
                     np.stack([s[:, 2], s[:, 1]], axis=1)], axis=1)  # sigma[c, k]
    R = -np.einsum("eck,eajk->eajc", tens, gint)
    fn = solution.loads.body
    if fn is not None:
        pts = np.einsum("qa,ead->eqd", lam, mesh.coords)
        f = fn(pts.reshape(-1, 2)).reshape(ne, len(w), 2)
        contrib = np.einsum("q,qa,qj,eqc->eajc", w, lam, vals, f, optimize=True)
        R += contrib * area2[:, None, None, None]
    R += _boundary_residual_loads(solution, space)
    R *= space.signs[:, None, :, None]
    return R.reshape(ne, 3, 2 * nf)


def _boundary_residual_loads(solution, space):
    mesh = solution.mesh
    ne, nf = mesh.n_elements, space.nf
    out = np.zeros((ne, 3, nf, 2))
    mask = mesh.neumann_mask
    if not mask.any():
        return out
    from .basis import LOCAL_EDGES
    rule = quadrature("edge", space.degree + 1 + LOAD_EXACTNESS)
    t = rule.points[:, 0]
    ref_v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    for k, (a, b) in enumerate(LOCAL_EDGES):
        g = mesh.elem_edges[:, k]
        elems = np.nonzero(mask[g].any(axis=1))[0]
        if not len(elems):
            continue
        pts_ref = (1.0 - t)[:, None] * ref_v[a] + t[:, None] * ref_v[b]
        vals, _ = space.basis.eval(pts_ref)
        lam = np.zeros((len(t), 3))
        lam[:, a], lam[:, b] = 1.0 - t, t
        x = mesh.coords[elems]
        xa, xb = x[:, a], x[:, b]
        pts = xa[:, None, :] + t[None, :, None] * (xb - xa)[:, None, :]
        length = np.linalg.norm(xb - xa, axis=1)
        F = np.zeros((len(elems), len(t), 2))
        for gid, name in enumerate(mesh.groups):
            fn = solution.loads.traction(name)
            sel = mesh.edge_group[g[elems]] == gid
            if fn is None or not sel.any():
                continue
            F[sel] = fn(pts[sel].reshape(-1, 2)).reshape(-1, len(t), 2)
        F *= mask[g[elems]][:, None, :]
        contrib = np.einsum("q,qa,qj,eqc->eajc", rule.weights, lam, vals, F, optimize=True)
        out[elems] += contrib * length[:, None, None, None]
    return out


@dataclass(frozen=True, eq=False)
class PatchSolution:
    vertex: int
    elements: np.ndarray
    dofs: np.ndarray          # global scalar dofs of the patch, sorted
    fixed: np.ndarray         # (ndof, 2) fixed components
    values: np.ndarray        # (ndof, 2) correction coefficients
    rhs: np.ndarray           # (ndof, 2) right-hand side
    n_rigid: int              # rigid motions removed by constraints
    residual: float

    @property
    def energy(self):
        return float(np.sum(self.values * self.rhs))


class _PatchData:
    """Arrays shared by all patch problems of one solution."""

    def __init__(self, solution, space):
        self.solution = solution
        self.space = space
        mesh = solution.mesh
        self.dof_map = element_dof_map(mesh, space.degree)
        self.fixed = fixed_scalar_dofs(mesh, space.degree)
        self.loads = element_residual_loads(solution, space)
        self.n_vertex = mesh.n_nodes


def _patch_layout(data, vertex):
    mesh = data.solution.mesh
    elems = mesh.node_elems[vertex]
    dofs = np.unique(data.dof_map[elems])
    local = np.searchsorted(dofs, data.dof_map[elems])              # (np, nf)
    vdofs = np.column_stack([2 * local, 2 * local + 1]).reshape(len(elems), 2, -1)
    vdofs = vdofs.transpose(0, 2, 1).reshape(len(elems), -1)         # interleaved 2 j + c
    return elems, dofs, vdofs


def _patch_rhs_vector(data, vertex, elems, dofs, vdofs):
    mesh = data.solution.mesh
    rhs = np.zeros(2 * len(dofs))
    for e, vd in zip(elems, vdofs):
        a = int(np.nonzero(mesh.triangles[e] == vertex)[0][0])
        np.add.at(rhs, vd, data.loads[e, a])
    # linear interpolation annihilates the vertex modes; fixed components
    # are not admissible test functions
    rhs.reshape(-1, 2)[dofs < data.n_vertex] = 0.0
    rhs[data.fixed[dofs].ravel()] = 0.0
    return rhs


def patch_rhs(solution, vertex, index=None, space=None):
    """Right-hand side of the patch problem of ``vertex``.

    Returns the full vector over the patch's vector dofs (``2 j + c`` for
    the ``j``-th entry of the patch's sorted global scalar dofs) together
    with those scalar dofs, or a single entry when ``index`` is given.
    """
    space = space or LocalSpace(solution.mesh, solution.material, 4)
    data = _PatchData(solution, space)
    elems, dofs, vdofs = _patch_layout(data, vertex)
    rhs = _patch_rhs_vector(data, vertex, elems, dofs, vdofs)
    if index is not None:
        return float(rhs[index])
    return rhs, dofs


def _solve_patch(data, vertex, tol=1e-8):
    mesh = data.solution.mesh
    space = data.space
    elems, dofs, vdofs = _patch_layout(data, vertex)
    n = 2 * len(dofs)
    K = np.zeros((n, n))
    Mv = np.zeros((n, n))
    for e, vd in zip(elems, vdofs):
        K[np.ix_(vd, vd)] += space.stiffness[e]
        Mv[np.ix_(vd, vd)] += space.mass[e]
    rhs = _patch_rhs_vector(data, vertex, elems, dofs, vdofs)
    fixed = data.fixed[dofs].ravel()
    free = np.nonzero(~fixed)[0]

    # rigid motions left free by the fixed dofs
    is_vertex = np.repeat(dofs < data.n_vertex, 2)
    xy = np.zeros((len(dofs), 2))
    xy[dofs < data.n_vertex] = mesh.nodes[dofs[dofs < data.n_vertex]]
    xc = mesh.nodes[vertex]
    Rg = np.zeros((n, 3))
    Rg[0::2, 0] = 1.0
    Rg[1::2, 1] = 1.0
    Rg[0::2, 2] = -(xy[:, 1] - xc[1])
    Rg[1::2, 2] = xy[:, 0] - xc[0]
    Rg[~is_vertex] = 0.0
    Rfix = Rg[fixed]
    if Rfix.size:
        _, sv, vt = np.linalg.svd(Rfix, full_matrices=True)
        rank = int(np.sum(sv > 1e-10 * max(sv.max(initial=0.0), 1.0)))
        null = vt[rank:].T
    else:
        null = np.eye(3)
    Cn = (Mv @ (Rg @ null)).T[:, free]                                 # (nr, nfree)
    nr = Cn.shape[0]
    Kff = K[np.ix_(free, free)]
    if nr:
        Cn *= np.abs(Kff).max() / np.abs(Cn).max()
        A = np.zeros((len(free) + nr, len(free) + nr))
        A[:len(free), :len(free)] = Kff
        A[:len(free), len(free):] = Cn.T
        A[len(free):, :len(free)] = Cn
        b = np.concatenate([rhs[free], np.zeros(nr)])
    else:
        A, b = Kff, rhs[free]
    try:
        x = sla.solve(A, b, assume_a="sym")
    except (sla.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"patch of vertex {vertex}: {exc}") from None
    values = np.zeros(n)
    values[free] = x[:len(free)]
    r = K[np.ix_(free, free)] @ values[free] - rhs[free]
    scale = max(np.abs(rhs).max(), np.abs(K).max() * np.abs(values).max(), 1e-300)
    res = float(np.abs(r).max(initial=0.0) / scale)
    if not np.isfinite(res) or res > tol:
        raise SingularSystemError(f"patch of vertex {vertex}: residual {res:.3e}")
    return PatchSolution(vertex=int(vertex), elements=elems, dofs=dofs,
                         fixed=fixed.reshape(-1, 2), values=values.reshape(-1, 2),
                         rhs=rhs.reshape(-1, 2), n_rigid=nr, residual=res)


def solve_patch(solution, vertex, space=None):
    """Solve the patch problem of one vertex."""
    space = space or LocalSpace(solution.mesh, solution.material, 4)
    return _solve_patch(_PatchData(solution, space), vertex)


def spet_estimate(solution, patches, space):
    """Global estimate, element contributions and the equilibrated stress."""
    mesh = solution.mesh
    dof_map = element_dof_map(mesh, space.degree)
    total = np.zeros((mesh.n_elements, space.nf, 2))
    for p in patches:
        local = np.searchsorted(p.dofs, dof_map[p.elements])
        total[p.elements] += p.values[local]
    base = space.linear_coefficients(solution.u)
    adm = AdmissibleStress(space, base + total.reshape(mesh.n_elements, -1), base, "spet")
    local = np.sqrt(np.maximum(adm.correction_energy(), 0.0))
    return float(np.sqrt(np.sum(local ** 2))), local, adm


def run_spet(solution, degree=4):
    """Solve all patch problems and return ``(theta, per_element, stress)``."""
    space = LocalSpace(solution.mesh, solution.material, degree)
    data = _PatchData(solution, space)
    patches = [_solve_patch(data, i) for i in range(solution.mesh.n_nodes)]
    return spet_estimate(solution, patches, space)
