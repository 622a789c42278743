"""Shape functions and quadrature on the reference triangle and edge.

Reference triangle has vertices (0, 0), (1, 0), (0, 1); its barycentric
coordinates are ``l0 = 1 - x - y``, ``l1 = x``, ``l2 = y`` and double as the
degree-1 Lagrange basis. The reference edge is ``[0, 1]`` with coordinate t.

Hierarchical sets are built from integrated Legendre polynomials:

* vertex modes ``l0, l1, l2``;
* for every local edge ``k = (k, k+1 mod 3)`` the modes
  ``4 la lb P'_m(lb - la) / (m (m + 1))``, ``m = 1 .. degree - 1``;
* bubbles ``l0 l1 l2 P_a(l1 - l0) P_b(2 l2 - 1)``, ``a + b <= degree - 3``.

Every non-vertex mode vanishes at the three vertices, so the degree-1 part of
a field expanded in this basis is exactly its linear interpolant.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

__all__ = [
    "QuadratureRule",
    "BasisSet",
    "quadrature",
    "eval_basis",
    "hierarchical_layout",
    "edge_mode_signs",
    "edge_mass_matrix",
    "LOCAL_EDGES",
]

#: local edge k joins local vertices LOCAL_EDGES[k]
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])

_BARY_GRAD = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

MAX_EXACTNESS = 40


@dataclass(frozen=True)
class QuadratureRule:
    entity: str
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature(entity, exactness):
    """Gauss rule on the reference ``"edge"`` or ``"triangle"``.

    Triangle rules are conical products of Gauss-Legendre and Gauss-Jacobi
    (weight ``1 - b``) points, exact for total degree ``exactness``.
    """
    exactness = int(exactness)
    if exactness < 0:
        raise ValueError("exactness must be non-negative")
    if exactness > MAX_EXACTNESS:
        raise ValueError(f"no rule with exactness {exactness} (max {MAX_EXACTNESS})")
    n = max(1, math.ceil((exactness + 1) / 2))
    s, ws = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (s + 1.0)
    wa = 0.5 * ws
    if entity == "edge":
        return QuadratureRule("edge", a.reshape(-1, 1), wa, exactness)
    if entity != "triangle":
        raise ValueError(f"unknown entity {entity!r}")
    t, wt = roots_jacobi(n, 1.0, 0.0)
    b = 0.5 * (t + 1.0)
    wb = 0.25 * wt
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    return QuadratureRule("triangle", pts, (WA * WB).ravel(), exactness)


def hierarchical_layout(degree):
    """Return ``(n_vertex, n_per_edge, n_bubble)`` for a triangle set."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    return 3, degree - 1, max(0, (degree - 2) * (degree - 1) // 2)


def _bubble_exponents(degree):
    out = []
    for total in range(degree - 2):
        for b in range(total + 1):
            out.append((total - b, b))
    return out


def _leg(coef_index, s, deriv=0):
    c = np.zeros(coef_index + 1)
    c[coef_index] = 1.0
    if deriv:
        c = legendre.legder(c, deriv)
    return legendre.legval(s, c)


def _triangle_hierarchical(degree, pts):
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    vals = [lam[:, 0], lam[:, 1], lam[:, 2]]
    grads = [np.broadcast_to(_BARY_GRAD[k], pts.shape) for k in range(3)]
    for a, b in LOCAL_EDGES:
        la, lb = lam[:, a], lam[:, b]
        ga, gb = _BARY_GRAD[a], _BARY_GRAD[b]
        s = lb - la
        prod = la * lb
        dprod = np.outer(lb, ga) + np.outer(la, gb)
        for m in range(1, degree):
            c = 4.0 / (m * (m + 1))
            d1 = _leg(m, s, 1)
            d2 = _leg(m, s, 2)
            vals.append(c * prod * d1)
            grads.append(c * (dprod * d1[:, None] + np.outer(prod * d2, gb - ga)))
    if degree >= 3:
        bub = lam[:, 0] * lam[:, 1] * lam[:, 2]
        dbub = (np.outer(lam[:, 1] * lam[:, 2], _BARY_GRAD[0])
                + np.outer(lam[:, 0] * lam[:, 2], _BARY_GRAD[1])
                + np.outer(lam[:, 0] * lam[:, 1], _BARY_GRAD[2]))
        s1 = lam[:, 1] - lam[:, 0]
        s2 = 2.0 * lam[:, 2] - 1.0
        g1 = _BARY_GRAD[1] - _BARY_GRAD[0]
        g2 = 2.0 * _BARY_GRAD[2]
        for ea, eb in _bubble_exponents(degree):
            pa, pb = _leg(ea, s1), _leg(eb, s2)
            dpa, dpb = _leg(ea, s1, 1), _leg(eb, s2, 1)
            vals.append(bub * pa * pb)
            grads.append(dbub * (pa * pb)[:, None]
                         + np.outer(bub * dpa * pb, g1) + np.outer(bub * pa * dpb, g2))
    return np.column_stack(vals), np.stack(grads, axis=1)


def _edge_hierarchical(degree, t):
    s = 2.0 * t - 1.0
    vals = [1.0 - t, t]
    grads = [-np.ones_like(t), np.ones_like(t)]
    for m in range(1, degree):
        c = 4.0 / (m * (m + 1))
        prod = t * (1.0 - t)
        d1, d2 = _leg(m, s, 1), _leg(m, s, 2)
        vals.append(c * prod * d1)
        grads.append(c * ((1.0 - 2.0 * t) * d1 + prod * d2 * 2.0))
    return np.column_stack(vals), np.stack(grads, axis=1)[:, :, None]


def _monomial_exponents(degree):
    return [(i, j) for j in range(degree + 1) for i in range(degree + 1 - j)]


@lru_cache(maxsize=None)
def _lagrange_triangle_coeffs(degree):
    nodes = lagrange_nodes(degree)
    exps = _monomial_exponents(degree)
    V = np.array([[x ** i * y ** j for i, j in exps] for x, y in nodes])
    return np.linalg.inv(V)


def lagrange_nodes(degree):
    """Equispaced Lagrange nodes on the reference triangle, vertices first."""
    if degree == 1:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = [(i / degree, j / degree) for j in range(degree + 1) for i in range(degree + 1 - j)]
    corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    rest = [p for p in pts if p not in corners]
    return np.array(corners + rest)


def _triangle_lagrange(degree, pts):
    if degree == 1:
        lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
        return lam, np.broadcast_to(_BARY_GRAD, (len(pts), 3, 2)).copy()
    inv = _lagrange_triangle_coeffs(degree)
    exps = _monomial_exponents(degree)
    x, y = pts[:, 0], pts[:, 1]
    mono = np.column_stack([x ** i * y ** j for i, j in exps])
    dx = np.column_stack([i * x ** max(i - 1, 0) * y ** j for i, j in exps])
    dy = np.column_stack([j * x ** i * y ** max(j - 1, 0) for i, j in exps])
    vals = mono @ inv
    grads = np.stack([dx @ inv, dy @ inv], axis=2)
    return vals, grads


def _edge_lagrange(degree, t):
    nodes = np.concatenate([[0.0, 1.0], np.linspace(0.0, 1.0, degree + 1)[1:-1]])
    n = len(nodes)
    vals = np.ones((len(t), n))
    grads = np.zeros((len(t), n))
    for a in range(n):
        others = [nodes[b] for b in range(n) if b != a]
        denom = np.prod([nodes[a] - o for o in others])
        vals[:, a] = np.prod([t - o for o in others], axis=0) / denom
        for skip in range(len(others)):
            term = np.ones_like(t)
            for q, o in enumerate(others):
                if q != skip:
                    term = term * (t - o)
            grads[:, a] += term / denom
    return vals, grads[:, :, None]


@dataclass(frozen=True)
class BasisSet:
    """A scalar shape-function set on a reference entity."""

    kind: str
    degree: int
    entity: str

    def __post_init__(self):
        if self.kind not in ("lagrange", "hierarchical"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.entity not in ("triangle", "edge"):
            raise ValueError(f"unknown entity {self.entity!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")

    @property
    def size(self):
        d = self.degree
        if self.entity == "edge":
            return d + 1
        return (d + 1) * (d + 2) // 2

    @property
    def dim(self):
        return 2 if self.entity == "triangle" else 1

    def eval(self, points):
        """Values ``(npts, size)`` and gradients ``(npts, size, dim)``."""
        pts = np.asarray(points, dtype=float)
        if self.entity == "edge":
            t = pts.reshape(-1)
            if self.kind == "hierarchical":
                return _edge_hierarchical(self.degree, t)
            return _edge_lagrange(self.degree, t)
        pts = pts.reshape(-1, 2)
        if self.kind == "hierarchical":
            return _triangle_hierarchical(self.degree, pts)
        return _triangle_lagrange(self.degree, pts)


def eval_basis(basis, ref_point):
    return basis.eval(ref_point)


def edge_mode_signs(degree, flipped):
    """Sign multipliers ``(nelem, size)`` for hierarchical triangle modes.

    ``flipped[e, k]`` is true when local edge k of element e runs against the
    global edge orientation; odd-parity edge modes then change sign so that
    neighbouring elements share identical traces.
    """
    flipped = np.asarray(flipped, dtype=bool)
    _, per_edge, n_bub = hierarchical_layout(degree)
    nel = flipped.shape[0]
    parts = [np.ones((nel, 3))]
    for k in range(3):
        modes = np.ones((nel, per_edge))
        for j in range(1, per_edge, 2):
            modes[flipped[:, k], j] = -1.0
        parts.append(modes)
    parts.append(np.ones((nel, n_bub)))
    return np.concatenate(parts, axis=1)


def edge_mass_matrix(length, degree=1):
    """Lagrange mass matrix on a straight edge of the given length."""
    basis = BasisSet("lagrange", degree, "edge")
    rule = quadrature("edge", 2 * degree)
    vals, _ = basis.eval(rule.points)
    return length * np.einsum("q,qa,qb->ab", rule.weights, vals, vals)
