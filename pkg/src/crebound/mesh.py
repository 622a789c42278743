"""Triangular meshes with the connectivity used by the equilibration methods.

Conventions
-----------
* Triangles are counterclockwise; local edge ``k`` joins local vertices
  ``k`` and ``k + 1 mod 3``.
* Edges are stored as ``(low, high)`` node pairs; that is their canonical
  orientation.
* ``eta[e, k]`` is +1 when element ``e`` is the lower-index neighbour of its
  local edge ``k`` (or the only one), -1 otherwise.
* Boundary edges carry a tag (dirichlet or neumann), a group name and a
  per-component ``fixed`` mask. A dirichlet edge may fix only one Cartesian
  component (a roller / symmetry condition); its free component is then
  loaded by a prescribed traction like a neumann edge.

With linear elements nodes and vertices coincide, so the node-based and
vertex-based adjacency sets are the same arrays.
"""
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import MeshError
from .basis import LOCAL_EDGES

__all__ = [
    "INTERIOR",
    "DIRICHLET",
    "NEUMANN",
    "BoundaryRule",
    "box",
    "Mesh",
    "Patch",
    "build_topology",
    "refine_uniform",
    "prolongate",
    "patch",
    "read_mesh",
    "write_mesh",
]

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}
_TAG_CODES = {"dirichlet": DIRICHLET, "neumann": NEUMANN}


def _frozen_cache(fn):
    """Cache a derived array on first access and mark it read-only."""
    def wrapper(self):
        out = fn(self)
        out.flags.writeable = False
        return out
    wrapper.__doc__ = fn.__doc__
    return cached_property(wrapper)


@dataclass(frozen=True)
class BoundaryRule:
    """Assigns a tag and group to boundary edges.

    ``where`` receives edge midpoints ``(n, 2)`` and returns a boolean mask;
    ``None`` matches every edge. ``components`` lists the displacement
    components fixed on dirichlet edges (0 = x, 1 = y).
    """

    group: str
    tag: str
    where: object = None
    components: tuple = (0, 1)

    def __post_init__(self):
        if self.tag not in _TAG_CODES:
            raise MeshError(f"boundary tag must be dirichlet or neumann, got {self.tag!r}")
        if self.tag == "dirichlet" and not self.components:
            raise MeshError("a dirichlet rule must fix at least one component")


def box(xmin=-np.inf, xmax=np.inf, ymin=-np.inf, ymax=np.inf, tol=1e-9):
    """Midpoint predicate selecting edges inside an axis-aligned box."""
    def where(mid):
        return ((mid[:, 0] >= xmin - tol) & (mid[:, 0] <= xmax + tol)
                & (mid[:, 1] >= ymin - tol) & (mid[:, 1] <= ymax + tol))
    where.box = (xmin, xmax, ymin, ymax)
    return where


def _csr_lists(owner, values, n):
    order = np.argsort(owner, kind="stable")
    counts = np.bincount(owner, minlength=n)
    splits = np.cumsum(counts)[:-1]
    return [np.sort(a) for a in np.split(values[order], splits)]


@dataclass(eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    elem_edges: np.ndarray
    edge_elems: np.ndarray
    eta: np.ndarray
    boundary_tag: np.ndarray
    edge_group: np.ndarray
    groups: tuple
    fixed: np.ndarray
    node_fixed: np.ndarray
    node_elems: list
    node_edges: list
    parent: np.ndarray = None
    node_parents: np.ndarray = None
    extras: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @_frozen_cache
    def coords(self):
        """Vertex coordinates per element, ``(nelem, 3, 2)``."""
        return self.nodes[self.triangles]

    @_frozen_cache
    def areas(self):
        x = self.coords
        d1 = x[:, 1] - x[:, 0]
        d2 = x[:, 2] - x[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @_frozen_cache
    def jacobians(self):
        """Affine map derivatives ``J[e] = [x1 - x0, x2 - x0]`` as columns."""
        x = self.coords
        return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)

    @_frozen_cache
    def edge_lengths(self):
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @_frozen_cache
    def edge_midpoints(self):
        return 0.5 * (self.nodes[self.edges[:, 0]] + self.nodes[self.edges[:, 1]])

    @_frozen_cache
    def outward_normals(self):
        """Unit outward normals per element local edge, ``(nelem, 3, 2)``."""
        x = self.coords
        d = x[:, LOCAL_EDGES[:, 1]] - x[:, LOCAL_EDGES[:, 0]]
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @_frozen_cache
    def edge_normals(self):
        """Unit normal of each edge, outward for its lower-index element."""
        e0 = self.edge_elems[:, 0]
        k = np.argmax(self.elem_edges[e0] == np.arange(self.n_edges)[:, None], axis=1)
        return self.outward_normals[e0, k]

    @property
    def diameter(self):
        return float(self.edge_lengths.max())

    @_frozen_cache
    def is_boundary_edge(self):
        return self.boundary_tag != INTERIOR

    @_frozen_cache
    def neumann_mask(self):
        """``(nedge, 2)``: component c of the edge carries a prescribed traction."""
        return self.is_boundary_edge[:, None] & ~self.fixed

    @_frozen_cache
    def boundary_nodes(self):
        flags = np.zeros(self.n_nodes, dtype=bool)
        flags[self.edges[self.is_boundary_edge].ravel()] = True
        return flags

    def elements_of_node(self, i):
        return self.node_elems[i]

    def edges_of_node(self, i):
        return self.node_edges[i]

    def elements_of_edge(self, g):
        pair = self.edge_elems[g]
        return pair[pair >= 0]

    def nodes_of_edge(self, g):
        return self.edges[g]

    def nodes_of_element(self, e):
        return self.triangles[e]

    def local_edge(self, e, g):
        """Local index of global edge ``g`` in element ``e``."""
        hits = np.nonzero(self.elem_edges[e] == g)[0]
        if not len(hits):
            raise KeyError(f"edge {g} is not an edge of element {e}")
        return int(hits[0])

    def group_edges(self, name):
        gid = self.groups.index(name)
        return np.nonzero(self.edge_group == gid)[0]

    def summary(self):
        tags = {TAG_NAMES[t]: int(np.sum(self.boundary_tag == t)) for t in TAG_NAMES}
        per_group = {g: int(np.sum(self.edge_group == k)) for k, g in enumerate(self.groups)}
        areas = self.areas
        return {
            "nodes": self.n_nodes,
            "elements": self.n_elements,
            "edges": self.n_edges,
            "edge_tags": tags,
            "groups": per_group,
            "area": float(areas.sum()),
            "min_area": float(areas.min()),
            "max_area": float(areas.max()),
            "h_max": self.diameter,
        }


def _rules_assigner(rules):
    rules = list(rules)

    def assign(bedges, mid):
        n = len(bedges)
        tags = np.zeros(n, dtype=np.int8)
        gids = np.full(n, -1, dtype=np.int64)
        fixed = np.zeros((n, 2), dtype=bool)
        groups = []
        for rule in rules:
            todo = gids < 0
            if not todo.any():
                break
            if rule.where is None:
                hit = np.ones(n, dtype=bool)
            else:
                hit = np.asarray(rule.where(mid), dtype=bool)
            hit &= todo
            if not hit.any():
                continue
            if rule.group not in groups:
                groups.append(rule.group)
            gids[hit] = groups.index(rule.group)
            tags[hit] = _TAG_CODES[rule.tag]
            if rule.tag == "dirichlet":
                for c in rule.components:
                    fixed[hit, c] = True
        return tags, gids, fixed, tuple(groups)

    return assign


def build_topology(nodes, triangles, boundary_spec):
    """Build a :class:`Mesh` from coordinates, triangles and boundary rules.

    ``boundary_spec`` is a sequence of :class:`BoundaryRule`, tried in order
    with the first match winning.
    """
    return _build(nodes, triangles, _rules_assigner(boundary_spec))


def _build(nodes, triangles, assign, parent=None, node_parents=None):
    nodes = np.ascontiguousarray(nodes, dtype=float).reshape(-1, 2)
    tris = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
    nn, ne = len(nodes), len(tris)
    if ne == 0:
        raise MeshError("mesh has no triangles")
    if tris.min() < 0 or tris.max() >= nn:
        raise MeshError("triangle references a node that does not exist")
    x = nodes[tris]
    d1, d2 = x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    bad = np.nonzero(area <= 0.0)[0]
    if len(bad):
        raise MeshError(f"inverted or degenerate triangle(s): {bad[:10].tolist()}")

    local = tris[:, LOCAL_EDGES]                      # (ne, 3, 2)
    lo = local.min(axis=2).ravel()
    hi = local.max(axis=2).ravel()
    key = lo * nn + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    if counts.max() > 2:
        g = int(np.argmax(counts))
        raise MeshError(f"non-manifold edge ({uniq[g] // nn}, {uniq[g] % nn}) "
                        f"shared by {counts[g]} triangles")
    edges = np.column_stack([uniq // nn, uniq % nn])
    elem_edges = inverse.reshape(ne, 3)
    nedge = len(edges)

    owner = np.repeat(np.arange(ne), 3)
    flat = elem_edges.ravel()
    order = np.lexsort((owner, flat))
    edge_elems = np.full((nedge, 2), -1, dtype=np.int64)
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    edge_elems[flat[order][first], 0] = owner[order][first]
    edge_elems[flat[order][~first], 1] = owner[order][~first]

    eta = np.where(edge_elems[elem_edges, 0] == np.arange(ne)[:, None], 1, -1).astype(np.int8)

    is_bnd = edge_elems[:, 1] < 0
    bidx = np.nonzero(is_bnd)[0]
    mid = 0.5 * (nodes[edges[bidx, 0]] + nodes[edges[bidx, 1]])
    btags, bgids, bfixed, groups = assign(edges[bidx], mid)
    if np.any(bgids < 0):
        miss = bidx[bgids < 0]
        raise MeshError(f"{len(miss)} boundary edge(s) not matched by any boundary rule, "
                        f"e.g. edge {edges[miss[0]].tolist()}")
    boundary_tag = np.zeros(nedge, dtype=np.int8)
    edge_group = np.full(nedge, -1, dtype=np.int64)
    fixed = np.zeros((nedge, 2), dtype=bool)
    boundary_tag[bidx] = btags
    edge_group[bidx] = bgids
    fixed[bidx] = bfixed

    node_fixed = np.zeros((nn, 2), dtype=bool)
    for c in range(2):
        fe = np.nonzero(fixed[:, c])[0]
        node_fixed[edges[fe].ravel(), c] = True

    node_elems = _csr_lists(tris.ravel(), np.repeat(np.arange(ne), 3), nn)
    node_edges = _csr_lists(edges.ravel(), np.repeat(np.arange(nedge), 2), nn)

    return Mesh(nodes=nodes, triangles=tris, edges=edges, elem_edges=elem_edges,
                edge_elems=edge_elems, eta=eta, boundary_tag=boundary_tag,
                edge_group=edge_group, groups=tuple(groups), fixed=fixed,
                node_fixed=node_fixed, node_elems=node_elems, node_edges=node_edges,
                parent=parent, node_parents=node_parents)


def _refine_once(mesh):
    nn = mesh.n_nodes
    mids = nn + mesh.elem_edges                        # midpoint node of each local edge
    t = mesh.triangles
    m01, m12, m20 = mids[:, 0], mids[:, 1], mids[:, 2]
    children = np.stack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    nodes = np.vstack([mesh.nodes, mesh.edge_midpoints])
    parents = np.vstack([np.full((nn, 2), -1, dtype=np.int64), mesh.edges])

    def assign(bedges, mid):
        # every child boundary edge has exactly one midpoint endpoint
        m = bedges.max(axis=1) - nn
        tags = mesh.boundary_tag[m]
        if np.any(tags == INTERIOR):
            raise MeshError("refinement produced a boundary edge on an interior parent")
        return tags, mesh.edge_group[m], mesh.fixed[m], mesh.groups

    return _build(nodes, children, assign), parents


def refine_uniform(mesh, levels):
    """Split every triangle into four, ``levels`` times.

    The returned mesh keeps ``parent`` (element index in ``mesh``) and
    ``node_parents`` (for every node created, the two nodes of the edge it
    bisects; -1 for inherited nodes). Node ``i`` of ``mesh`` is node ``i`` of
    the refined mesh.
    """
    levels = int(levels)
    if levels < 0:
        raise ValueError("levels must be non-negative")
    if levels == 0:
        return mesh
    out = mesh
    parent = np.arange(mesh.n_elements)
    node_parents = np.full((mesh.n_nodes, 2), -1, dtype=np.int64)
    history = []
    for _ in range(levels):
        out, np_level = _refine_once(out)
        parent = np.repeat(parent, 4)
        node_parents = np.vstack([node_parents, np_level[len(node_parents):]])
        history.append(out.n_nodes)
    out.parent = parent
    out.node_parents = node_parents
    out.extras["levels"] = levels
    out.extras["coarse_nodes"] = mesh.n_nodes
    return out


def prolongate(fine, values):
    """Interpolate a nodal field of the coarse mesh onto ``fine`` (nested)."""
    values = np.asarray(values, dtype=float)
    n0 = fine.extras.get("coarse_nodes", fine.n_nodes)
    out = np.zeros((fine.n_nodes,) + values.shape[1:])
    out[:n0] = values[:n0]
    # midpoint nodes are numbered after both of their parents
    start = n0
    while start < fine.n_nodes:
        par = fine.node_parents[start:]
        ready = np.all(par < start, axis=1)
        stop = start + (np.argmin(ready) if not ready.all() else len(ready))
        p = fine.node_parents[start:stop]
        out[start:stop] = 0.5 * (out[p[:, 0]] + out[p[:, 1]])
        start = stop
    return out


@dataclass(frozen=True)
class Patch:
    vertex: int
    elements: np.ndarray
    edges: np.ndarray
    on_dirichlet: np.ndarray
    on_neumann: np.ndarray

    @property
    def closed(self):
        return not (self.on_dirichlet.any() or self.on_neumann.any())


def patch(mesh, vertex):
    """Elements and edges around a vertex, with boundary flags per edge.

    ``on_dirichlet`` marks patch edges with at least one fixed component,
    ``on_neumann`` those with at least one traction-loaded component.
    """
    if not 0 <= vertex < mesh.n_nodes:
        raise IndexError(f"vertex {vertex} out of range")
    edges = mesh.node_edges[vertex]
    return Patch(vertex=int(vertex), elements=mesh.node_elems[vertex], edges=edges,
                 on_dirichlet=mesh.fixed[edges].any(axis=1),
                 on_neumann=mesh.neumann_mask[edges].any(axis=1))


# --------------------------------------------------------------------------- io

_COMPONENTS = {"x": (0,), "y": (1,), "xy": (0, 1)}


def _parse_rule(tokens, lineno):
    if len(tokens) < 3:
        raise MeshError(f"line {lineno}: boundary rule needs a group and a tag")
    group, tag = tokens[1], tokens[2]
    comps = (0, 1)
    where = None
    for tok in tokens[3:]:
        if "=" not in tok:
            raise MeshError(f"line {lineno}: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        if k == "components":
            if v not in _COMPONENTS:
                raise MeshError(f"line {lineno}: components must be x, y or xy")
            comps = _COMPONENTS[v]
        elif k == "box":
            vals = [float(s) for s in v.split(",")]
            if len(vals) != 4:
                raise MeshError(f"line {lineno}: box needs xmin,xmax,ymin,ymax")
            where = box(*vals)
        else:
            raise MeshError(f"line {lineno}: unknown key {k!r}")
    try:
        return BoundaryRule(group, tag, where, comps)
    except MeshError as exc:
        raise MeshError(f"line {lineno}: {exc}") from None


def read_mesh(path):
    """Read the plain-text mesh format.

    ::

        nodes N elements M
        x y                      (N lines)
        i j k                    (M lines, 0-based, counterclockwise)
        boundary <group> <dirichlet|neumann> [components=x|y|xy] [box=x0,x1,y0,y1]
        ...

    Blank lines and ``#`` comments are ignored. Boundary rules are tried in
    file order; a rule without ``box`` matches every remaining edge.
    """
    with open(path) as fh:
        lines = []
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append((n, line))
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    m = re.fullmatch(r"nodes\s+(\d+)\s+elements\s+(\d+)", lines[0][1])
    if not m:
        raise MeshError(f"{path}: header must read 'nodes N elements M'")
    nn, ne = int(m.group(1)), int(m.group(2))
    if len(lines) < 1 + nn + ne:
        raise MeshError(f"{path}: expected {nn} node and {ne} element lines")
    try:
        nodes = np.array([[float(v) for v in l.split()] for _, l in lines[1:1 + nn]])
        tris = np.array([[int(v) for v in l.split()] for _, l in lines[1 + nn:1 + nn + ne]])
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from None
    if nodes.shape != (nn, 2) or tris.shape != (ne, 3):
        raise MeshError(f"{path}: node lines need 2 values and element lines 3")
    rules = []
    for n, line in lines[1 + nn + ne:]:
        tokens = line.split()
        if tokens[0] != "boundary":
            raise MeshError(f"{path}: line {n}: expected a boundary rule")
        rules.append(_parse_rule(tokens, n))
    return build_topology(nodes, tris, rules)


def write_mesh(mesh, path):
    """Write ``mesh`` in the plain-text format, one boundary rule per edge."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes} elements {mesh.n_elements}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
        mid = mesh.edge_midpoints
        for g in np.nonzero(mesh.is_boundary_edge)[0]:
            tag = TAG_NAMES[mesh.boundary_tag[g]]
            line = f"boundary {mesh.groups[mesh.edge_group[g]]} {tag}"
            if mesh.boundary_tag[g] == DIRICHLET:
                comps = "".join("xy"[c] for c in range(2) if mesh.fixed[g, c])
                line += f" components={comps}"
            x, y = mid[g]
            line += f" box={x:.17g},{x:.17g},{y:.17g},{y:.17g}"
            fh.write(line + "\n")
