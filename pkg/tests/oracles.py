"""Independent reference computations for the tests.

Polynomials on the reference triangle are coefficient arrays ``c[a, b]`` of
``xi**a * eta**b``; integrals use the closed form for monomials. Nothing
here goes through the package's basis or quadrature code.
"""
from math import factorial

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P1
import scipy.linalg as sla
from scipy.signal import convolve2d


def const(v):
    return np.full((1, 1), float(v))


XI = np.array([[0.0, 0.0], [1.0, 0.0]])
ETA = np.array([[0.0, 1.0], [0.0, 0.0]])


def add(p, q):
    out = np.zeros((max(p.shape[0], q.shape[0]), max(p.shape[1], q.shape[1])))
    out[:p.shape[0], :p.shape[1]] += p
    out[:q.shape[0], :q.shape[1]] += q
    return out


def mul(p, q):
    return convolve2d(p, q)


def dxi(p):
    if p.shape[0] == 1:
        return const(0.0)
    return p[1:] * np.arange(1, p.shape[0])[:, None]


def deta(p):
    if p.shape[1] == 1:
        return const(0.0)
    return p[:, 1:] * np.arange(1, p.shape[1])[None, :]


def integrate(p):
    """Integral over the reference triangle (0,0), (1,0), (0,1)."""
    return sum(p[a, b] * factorial(a) * factorial(b) / factorial(a + b + 2)
               for a in range(p.shape[0]) for b in range(p.shape[1]) if p[a, b])


def compose(coeffs, s):
    """``sum_k coeffs[k] * s**k`` for a 1D power series and polynomial ``s``."""
    out = const(coeffs[-1])
    for c in coeffs[-2::-1]:
        out = add(mul(out, s), const(c))
    return out


def restrict(p, start, end):
    """1D power series in t of ``p`` along the reference segment start -> end."""
    x = np.array([start[0], end[0] - start[0]])
    y = np.array([start[1], end[1] - start[1]])
    out = np.zeros(1)
    for a in range(p.shape[0]):
        for b in range(p.shape[1]):
            if p[a, b]:
                out = P1.polyadd(out, p[a, b] * P1.polymul(P1.polypow(x, a), P1.polypow(y, b)))
    return out


def integrate_1d(c):
    return sum(ck / (k + 1) for k, ck in enumerate(c))


BARY = [add(const(1.0), -add(XI, ETA)), XI, ETA]
REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def integrated_legendre_derivative(m):
    """Power-series coefficients of ``P_m'``."""
    e = np.zeros(m + 1)
    e[m] = 1.0
    return legendre.leg2poly(legendre.legder(e))


def legendre_power(m):
    e = np.zeros(m + 1)
    e[m] = 1.0
    return legendre.leg2poly(e)


class Element:
    def __init__(self, mesh, e):
        self.e = e
        self.tri = mesh.triangles[e]
        X = mesh.nodes[self.tri]
        J = np.column_stack([X[1] - X[0], X[2] - X[0]])
        self.det = abs(np.linalg.det(J))
        self.JiT = np.linalg.inv(J).T

    def grad(self, p):
        gxi, geta = dxi(p), deta(p)
        return (add(self.JiT[0, 0] * gxi, self.JiT[0, 1] * geta),
                add(self.JiT[1, 0] * gxi, self.JiT[1, 1] * geta))

    def local(self, node):
        hit = np.nonzero(self.tri == node)[0]
        return int(hit[0]) if len(hit) else None


def mode(mesh, degree, el, dof):
    """Hierarchical global scalar mode ``dof`` restricted to element ``el``, or None."""
    nn, nk = mesh.n_nodes, mesh.n_edges
    per_edge, n_bub = degree - 1, (degree - 2) * (degree - 1) // 2
    lam = BARY
    if dof < nn:
        k = el.local(dof)
        return None if k is None else lam[k]
    dof -= nn
    if dof < nk * per_edge:
        g, m = divmod(dof, per_edge)
        if g not in mesh.elem_edges[el.e]:
            return None
        lo, hi = mesh.edges[g]
        la, lb = lam[el.local(lo)], lam[el.local(hi)]
        m += 1
        s = add(lb, -la)
        return (4.0 / (m * (m + 1))) * mul(mul(la, lb), compose(integrated_legendre_derivative(m), s))
    dof -= nk * per_edge
    owner, j = divmod(dof, n_bub)
    if owner != el.e:
        return None
    exps = [(t - b, b) for t in range(degree - 2) for b in range(t + 1)]
    ea, eb = exps[j]
    s1 = add(lam[1], -lam[0])
    s2 = add(2.0 * lam[2], const(-1.0))
    bub = mul(mul(lam[0], lam[1]), lam[2])
    return mul(bub, mul(compose(legendre_power(ea), s1), compose(legendre_power(eb), s2)))


def residual(solution, fields, component):
    """``R_h(v)`` for ``v = w e_c`` given per-element polynomials ``w``.

    ``fields`` maps element index to a polynomial on the reference triangle.
    Body forces and tractions must be constant.
    """
    mesh = solution.mesh
    body = solution.loads.body
    total = 0.0
    for e, w in fields.items():
        el = Element(mesh, e)
        s = solution.stress[e]
        tens = np.array([[s[0], s[2]], [s[2], s[1]]])
        gx, gy = el.grad(w)
        total -= el.det * integrate(add(tens[component, 0] * gx, tens[component, 1] * gy))
        if body is not None:
            f = body(mesh.coords[e].mean(axis=0)[None])[0]
            total += el.det * f[component] * integrate(w)
        for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 0)]):
            g = mesh.elem_edges[e, k]
            if not mesh.neumann_mask[g, component]:
                continue
            fn = solution.loads.traction(mesh.groups[mesh.edge_group[g]])
            if fn is None:
                continue
            F = fn(mesh.edge_midpoints[g][None])[0]
            length = mesh.edge_lengths[g]
            total += F[component] * length * integrate_1d(restrict(w, REF_VERTS[a], REF_VERTS[b]))
    return total


def patch_dofs(mesh, degree, vertex):
    """Sorted global scalar dofs supported on the vertex patch."""
    out = set()
    for e in mesh.node_elems[vertex]:
        el = Element(mesh, e)
        for d in range(_n_scalar(mesh, degree)):
            if mode(mesh, degree, el, d) is not None:
                out.add(d)
    return np.array(sorted(out))


def _n_scalar(mesh, degree):
    return (mesh.n_nodes + mesh.n_edges * (degree - 1)
            + mesh.n_elements * (degree - 2) * (degree - 1) // 2)


def patch_rhs(solution, vertex, degree=4):
    """``R_h(lambda_i (v - I v))`` for every patch dof, ordered ``2 j + c``."""
    mesh = solution.mesh
    dofs = patch_dofs(mesh, degree, vertex)
    out = np.zeros(2 * len(dofs))
    for j, d in enumerate(dofs):
        if d < mesh.n_nodes:
            continue                      # v - I v vanishes for a vertex mode
        fields = {}
        for e in mesh.node_elems[vertex]:
            el = Element(mesh, e)
            phi = mode(mesh, degree, el, d)
            if phi is not None:
                fields[e] = mul(BARY[el.local(vertex)], phi)
        for c in range(2):
            out[2 * j + c] = residual(solution, fields, c)
    _, fixed, _ = patch_stiffness(solution, vertex, degree, dofs_only=True)
    out[fixed] = 0.0                      # fixed components are not test functions
    return out, dofs


def patch_stiffness(solution, vertex, degree=4, dofs_only=False):
    """Dense stiffness of the patch space and the fixed-dof mask."""
    mesh = solution.mesh
    dofs = patch_dofs(mesh, degree, vertex)
    D = solution.material.D
    n = 2 * len(dofs)
    K = np.zeros((n, n))
    for e in ([] if dofs_only else mesh.node_elems[vertex]):
        el = Element(mesh, e)
        strains = {}
        for j, d in enumerate(dofs):
            phi = mode(mesh, degree, el, d)
            if phi is None:
                continue
            gx, gy = el.grad(phi)
            zero = const(0.0)
            strains[2 * j] = [gx, zero, gy]
            strains[2 * j + 1] = [zero, gy, gx]
        for a, ea in strains.items():
            for b, eb in strains.items():
                acc = const(0.0)
                for k in range(3):
                    for l in range(3):
                        if D[k, l]:
                            acc = add(acc, D[k, l] * mul(ea[k], eb[l]))
                K[a, b] += el.det * integrate(acc)
    fixed = np.zeros((len(dofs), 2), dtype=bool)
    per_edge = degree - 1
    for j, d in enumerate(dofs):
        if d < mesh.n_nodes:
            fixed[j] = mesh.node_fixed[d]
        elif d < mesh.n_nodes + mesh.n_edges * per_edge:
            fixed[j] = mesh.fixed[(d - mesh.n_nodes) // per_edge]
    return K, fixed.ravel(), dofs


def correction_energy(solution, admissible, dof_map):
    """Exact ``|D eps(w - u_h)|_C^2`` per element for an admissible stress.

    ``dof_map`` gives the global scalar dof of every local mode, so each
    coefficient multiplies the canonically oriented global mode.
    """
    mesh = solution.mesh
    space = admissible.space
    D = solution.material.D
    nf = space.nf
    diff = (admissible.coeffs - admissible.base).reshape(mesh.n_elements, nf, 2)
    out = np.zeros(mesh.n_elements)
    for e in range(mesh.n_elements):
        el = Element(mesh, e)
        w = [const(0.0), const(0.0)]
        for i in range(nf):
            phi = mode(mesh, space.degree, el, dof_map[e, i])
            for c in range(2):
                w[c] = add(w[c], diff[e, i, c] * phi)
        ux, uy = el.grad(w[0]), el.grad(w[1])
        eps = [ux[0], uy[1], add(ux[1], uy[0])]
        acc = const(0.0)
        for k in range(3):
            for l in range(3):
                if D[k, l]:
                    acc = add(acc, D[k, l] * mul(eps[k], eps[l]))
        out[e] = el.det * integrate(acc)
    return out


def kkt_oracle(system):
    """Dense pseudoinverse solve of the full saddle-point system."""
    G = np.vstack([system.C, system.B])
    g = np.concatenate([system.q, system.Q])
    n, m = system.n_unk, len(g)
    if n <= m:
        return np.linalg.pinv(G) @ g
    K = np.block([[system.M, G.T], [G, np.zeros((m, m))]])
    rhs = np.concatenate([system.M @ system.target, g])
    return (np.linalg.pinv(K, rcond=1e-13) @ rhs)[:n]


def qp_oracle(system):
    """Null-space solution of the equality-constrained least-squares problem."""
    G, g = system.A_red.T, system.R_red
    fp = np.linalg.lstsq(G, g, rcond=None)[0]
    Z = sla.null_space(G)
    y = np.linalg.solve(Z.T @ system.P @ Z, Z.T @ system.P @ (system.target - fp))
    return fp + Z @ y
