"""Higher-degree element spaces and the element-wise Neumann solves.

:class:`LocalSpace` holds, for every element, the stiffness and mass
matrices of the degree-``d`` hierarchical vector basis. Vector dof
``2 * i + c`` is component ``c`` of scalar mode ``i``; modes are signed so
that traces agree across edges, which lets the same data serve patch
assembly. Since the vertex modes are the linear hats, a linear field is
represented by its nodal values in the first six dofs.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import BasisSet, LOCAL_EDGES, edge_mode_signs, hierarchical_layout, quadrature
from .equil import local_edge_flips
from .errors import ConfigError, EquilibriumError, SingularSystemError
from .fem import LOAD_EXACTNESS

__all__ = ["LocalSpace", "AdmissibleStress", "solve_elements", "solve_element",
           "rigid_coefficients", "EQUILIBRIUM_TOL"]

EQUILIBRIUM_TOL = 1e-8

_VOIGT = np.array([[0, 2], [2, 1]])


def elasticity_tensor(D):
    """Index form ``C[c, k, d, l]`` of a Voigt stiffness ``D``."""
    C = np.empty((2, 2, 2, 2))
    for c in range(2):
        for k in range(2):
            for d in range(2):
                for l in range(2):
                    C[c, k, d, l] = D[_VOIGT[c, k], _VOIGT[d, l]]
    return C


class LocalSpace:
    """Degree-``degree`` hierarchical vector space on every element of a mesh."""

    def __init__(self, mesh, material, degree=4):
        if not 1 <= degree <= 6:
            raise ConfigError(f"local degree must be between 1 and 6, got {degree}")
        self.mesh = mesh
        self.material = material
        self.degree = int(degree)
        self.basis = BasisSet("hierarchical", self.degree, "triangle")
        self.nf = self.basis.size
        self.signs = edge_mode_signs(self.degree, local_edge_flips(mesh))
        self.rule = quadrature("triangle", 2 * self.degree)
        vals, grads = self.basis.eval(self.rule.points)
        self._ref_vals = vals
        self._ref_grads = grads

    @cached_property
    def inv_jacobians(self):
        return np.linalg.inv(self.mesh.jacobians)

    @cached_property
    def stiffness(self):
        """Element stiffness matrices ``(nelem, 2 nf, 2 nf)``."""
        w = self.rule.weights
        S = np.einsum("q,qia,qjb->ijab", w, self._ref_grads, self._ref_grads)
        Ji = self.inv_jacobians
        area2 = 2.0 * self.mesh.areas
        G = np.einsum("e,eak,ebl,ijab->eijkl", area2, Ji, Ji, S, optimize=True)
        Cel = elasticity_tensor(self.material.D)
        K = np.einsum("ckdl,eijkl->eicjd", Cel, G, optimize=True)
        K = K.reshape(len(G), 2 * self.nf, 2 * self.nf)
        sv = np.repeat(self.signs, 2, axis=1)
        return K * sv[:, :, None] * sv[:, None, :]

    @cached_property
    def scalar_mass(self):
        w = self.rule.weights
        ref = np.einsum("q,qi,qj->ij", w, self._ref_vals, self._ref_vals)
        Ms = (2.0 * self.mesh.areas)[:, None, None] * ref
        return Ms * self.signs[:, :, None] * self.signs[:, None, :]

    @cached_property
    def mass(self):
        """Vector mass matrices ``(nelem, 2 nf, 2 nf)``."""
        return np.einsum("eij,cd->eicjd", self.scalar_mass, np.eye(2)).reshape(
            self.mesh.n_elements, 2 * self.nf, 2 * self.nf)

    @cached_property
    def _edge_moment_tables(self):
        """``int_0^1 phi_i(edge k at t) * [1 - t, t] dt`` for k = 0, 1, 2."""
        rule = quadrature("edge", self.degree + 1)
        t = rule.points[:, 0]
        ref_v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        out = np.empty((3, self.nf, 2))
        for k, (a, b) in enumerate(LOCAL_EDGES):
            pts = (1.0 - t)[:, None] * ref_v[a] + t[:, None] * ref_v[b]
            vals, _ = self.basis.eval(pts)
            out[k] = np.einsum("q,qi,qa->ia", rule.weights, vals, np.column_stack([1.0 - t, t]))
        return out

    def traction_loads(self, tractions):
        """``int_dE eta F . v`` for every vector mode, ``(nelem, 2 nf)``."""
        mesh = self.mesh
        vals = tractions.local_values()                       # (ne, 3, 2, 2)
        lengths = mesh.edge_lengths[mesh.elem_edges]
        L = np.einsum("kia,ek,ekac->eic", self._edge_moment_tables, lengths, vals, optimize=True)
        return (L * self.signs[:, :, None]).reshape(mesh.n_elements, -1)

    def body_loads(self, loads):
        """``int_E f . v`` for every vector mode, ``(nelem, 2 nf)``."""
        mesh = self.mesh
        fn = loads.body
        if fn is None:
            return np.zeros((mesh.n_elements, 2 * self.nf))
        rule = quadrature("triangle", min(self.degree + LOAD_EXACTNESS, 40))
        vals, _ = self.basis.eval(rule.points)
        lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
        pts = np.einsum("qa,ead->eqd", lam, mesh.coords)
        f = fn(pts.reshape(-1, 2)).reshape(mesh.n_elements, len(rule), 2)
        L = np.einsum("q,qi,eqc->eic", rule.weights, vals, f, optimize=True)
        L *= (2.0 * mesh.areas)[:, None, None]
        return (L * self.signs[:, :, None]).reshape(mesh.n_elements, -1)

    def linear_coefficients(self, nodal):
        """Element coefficients ``(nelem, 2 nf)`` of a linear nodal field."""
        out = np.zeros((self.mesh.n_elements, self.nf, 2))
        out[:, :3] = np.asarray(nodal)[self.mesh.triangles]
        return out.reshape(self.mesh.n_elements, -1)

    def strains_at(self, coeffs, ref_points):
        """Voigt strains of element fields at reference points, ``(nelem, npts, 3)``."""
        _, grads = self.basis.eval(ref_points)
        g = np.einsum("qia,eak->eqik", grads, self.inv_jacobians) * self.signs[:, None, :, None]
        u = np.asarray(coeffs).reshape(self.mesh.n_elements, self.nf, 2)
        du = np.einsum("eqik,eic->eqck", g, u)                # du_c / dx_k
        return np.stack([du[..., 0, 0], du[..., 1, 1], du[..., 0, 1] + du[..., 1, 0]], axis=-1)

    def values_at(self, coeffs, ref_points):
        vals, _ = self.basis.eval(ref_points)
        u = np.asarray(coeffs).reshape(self.mesh.n_elements, self.nf, 2)
        return np.einsum("qi,ei,eic->eqc", vals, self.signs, u)


def rigid_coefficients(space):
    """Rigid-body modes in element coefficients, ``(nelem, 3, 2 nf)``."""
    x = space.mesh.coords
    r = x - x.mean(axis=1, keepdims=True)
    ne, nf = space.mesh.n_elements, space.nf
    out = np.zeros((ne, 3, nf, 2))
    out[:, 0, :3, 0] = 1.0
    out[:, 1, :3, 1] = 1.0
    out[:, 2, :3, 0] = -r[:, :, 1]
    out[:, 2, :3, 1] = r[:, :, 0]
    return out.reshape(ne, 3, 2 * nf)


@dataclass(frozen=True, eq=False)
class AdmissibleStress:
    """Element-wise stress ``D eps(w_E)`` from degree-d element displacements.

    ``coeffs`` holds the displacement coefficients ``(nelem, 2 nf)`` of
    ``space``; ``base`` is the FE displacement in the same coefficients so
    that ``coeffs - base`` generates the stress correction.
    """

    space: LocalSpace
    coeffs: np.ndarray
    base: np.ndarray
    label: str = ""

    def correction_energy(self):
        """Per-element complementary energy of ``sigma_hat - sigma_h``.

        Integrated from pointwise strains rather than through the stiffness
        matrix, so a rigid offset between the two displacements contributes
        nothing even in floating point.
        """
        rule = quadrature("triangle", 2 * self.space.degree - 2)
        eps = self.space.strains_at(self.coeffs - self.base, rule.points)
        dens = np.einsum("eqk,kl,eql->eq", eps, self.space.material.D, eps)
        return dens @ rule.weights * (2.0 * self.space.mesh.areas)

    def stress_at(self, ref_points):
        eps = self.space.strains_at(self.coeffs, ref_points)
        return eps @ self.space.material.D.T


def _pin_rows(space, pinning):
    R = rigid_coefficients(space)
    if pinning == "mean":
        return np.einsum("emj,eji->emi", R, space.mass)
    if pinning != "point":
        raise ConfigError(f"unknown pinning {pinning!r}; use 'mean' or 'point'")
    ne, n = space.mesh.n_elements, 2 * space.nf
    rows = np.zeros((ne, 3, n))
    rows[:, 0, 0] = 1.0
    rows[:, 1, 1] = 1.0
    d = space.mesh.coords[:, 1] - space.mesh.coords[:, 0]
    # rotation about vertex 0 moves vertex 1 along (-dy, dx)
    comp = np.where(np.abs(d[:, 0]) >= np.abs(d[:, 1]), 1, 0)
    rows[np.arange(ne), 2, 2 + comp] = 1.0
    return rows


def solve_elements(space, tractions, loads, pinning="mean", check=True):
    """Degree-d Neumann solves on all elements loaded by ``tractions``.

    Returns element displacement coefficients ``(nelem, 2 nf)``. The three
    rigid modes are removed by constraints: zero mass-weighted mean
    displacement and rotation (``"mean"``) or three fixed vertex dofs
    (``"point"``). Raises :class:`EquilibriumError` if any element's loads
    are not self-equilibrated to ``EQUILIBRIUM_TOL``.
    """
    K = space.stiffness
    L = space.traction_loads(tractions) + space.body_loads(loads)
    ne, n = L.shape
    if check:
        R = rigid_coefficients(space)
        res = np.einsum("emi,ei->em", R, L)
        h = space.mesh.edge_lengths[space.mesh.elem_edges].max(axis=1)
        mag = np.abs(L.reshape(ne, -1, 2)[:, :3]).sum(axis=(1, 2))
        res[:, 2] /= h
        scale = np.maximum(mag, 1e-12 * mag.max() + 1e-300)
        rel = np.linalg.norm(res, axis=1) / scale
        bad = np.nonzero(rel > EQUILIBRIUM_TOL)[0]
        if len(bad):
            raise EquilibriumError(
                f"{len(bad)} element(s) receive unbalanced loads, worst relative "
                f"residual {rel.max():.3e} on element {int(np.argmax(rel))}")
    Cn = _pin_rows(space, pinning)
    kscale = np.abs(K).max(axis=(1, 2))
    cscale = np.abs(Cn).max(axis=(1, 2))
    Cn = Cn * (kscale / cscale)[:, None, None]
    A = np.zeros((ne, n + 3, n + 3))
    A[:, :n, :n] = K
    A[:, :n, n:] = Cn.transpose(0, 2, 1)
    A[:, n:, :n] = Cn
    rhs = np.zeros((ne, n + 3))
    rhs[:, :n] = L
    try:
        sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"element solve failed: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError("element solve produced non-finite values")
    return sol[:, :n]


def solve_element(element, tractions, loads, material, k=3, pinning="mean"):
    """Stress coefficients of a single element; see :func:`solve_elements`."""
    from .mesh import build_topology, BoundaryRule
    from .equil import TractionField
    mesh = tractions.mesh
    tri = mesh.triangles[element]
    sub = build_topology(mesh.nodes[tri], np.array([[0, 1, 2]]),
                         [BoundaryRule("all", "neumann")])
    # re-express the element's edge tractions in the one-element mesh
    vals = tractions.local_values()[element]               # local orientation, eta applied
    coeffs = np.zeros((3, 2, 2))
    for kk in range(3):
        g = sub.elem_edges[0, kk]
        flipped = sub.triangles[0, kk] != sub.edges[g, 0]
        coeffs[g] = vals[kk][::-1] if flipped else vals[kk]
    space = LocalSpace(sub, material, 1 + k)
    w = solve_elements(space, TractionField(sub, coeffs), loads, pinning)
    return space, w[0]
