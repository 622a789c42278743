import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crebound.errors import MeshError
from crebound.fixtures import structured_rectangle
from crebound.mesh import (DIRICHLET, INTERIOR, NEUMANN, BoundaryRule, box, build_topology,
                           patch, prolongate, read_mesh, refine_uniform, write_mesh)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
CLAMP_LEFT = [BoundaryRule("left", "dirichlet", box(xmax=0.0)), BoundaryRule("rest", "neumann")]


def two_triangles():
    return build_topology(SQUARE, [[0, 1, 2], [0, 2, 3]], CLAMP_LEFT)


def grid(nx, ny, alternate=True, jitter=0.0, seed=0):
    nodes, tris = structured_rectangle(0.0, 1.0, 0.0, 1.0, nx, ny, alternate=alternate)
    if jitter:
        inner = (nodes > 1e-12).all(axis=1) & (nodes < 1 - 1e-12).all(axis=1)
        step = jitter / max(nx, ny)
        nodes[inner] += np.random.default_rng(seed).uniform(-step, step, (inner.sum(), 2))
    return build_topology(nodes, tris, CLAMP_LEFT)


def check_invariants(mesh):
    assert np.all(mesh.areas > 0)
    interior = ~mesh.is_boundary_edge
    # two neighbours inside, one on the boundary
    assert np.all(mesh.edge_elems[interior] >= 0)
    assert np.all(mesh.edge_elems[~interior, 1] == -1)
    counts = np.bincount(mesh.elem_edges.ravel(), minlength=mesh.n_edges)
    np.testing.assert_array_equal(counts, np.where(interior, 2, 1))
    # eta sums per edge
    sums = np.zeros(mesh.n_edges)
    np.add.at(sums, mesh.elem_edges.ravel(), mesh.eta.ravel())
    np.testing.assert_array_equal(sums[interior], 0)
    np.testing.assert_array_equal(sums[~interior], 1)
    # eta = +1 on the lower element index side
    for g in np.nonzero(interior)[0]:
        e0, e1 = mesh.edge_elems[g]
        assert e0 < e1
        assert mesh.eta[e0, list(mesh.elem_edges[e0]).index(g)] == 1
        assert mesh.eta[e1, list(mesh.elem_edges[e1]).index(g)] == -1
    # canonical orientation
    assert np.all(mesh.edges[:, 0] < mesh.edges[:, 1])
    # every element lies in exactly three vertex patches
    hits = np.zeros(mesh.n_elements, dtype=int)
    for v in range(mesh.n_nodes):
        hits[patch(mesh, v).elements] += 1
    np.testing.assert_array_equal(hits, 3)
    tags = mesh.boundary_tag
    assert np.all((tags == INTERIOR) == interior)
    assert np.all(np.isin(tags[~interior], [DIRICHLET, NEUMANN]))


def test_two_triangle_square():
    m = two_triangles()
    assert m.n_edges == 5
    interior = np.nonzero(~m.is_boundary_edge)[0]
    assert len(interior) == 1
    g = interior[0]
    e0, e1 = m.edge_elems[g]
    signs = [m.eta[e, list(m.elem_edges[e]).index(g)] for e in (e0, e1)]
    assert sorted(signs) == [-1, 1]
    check_invariants(m)


def test_single_triangle():
    m = build_topology(SQUARE[:3], [[0, 1, 2]],
                       [BoundaryRule("bottom", "dirichlet", box(ymax=0.0)),
                        BoundaryRule("rest", "neumann")])
    assert m.n_edges == 3
    assert m.is_boundary_edge.all()
    assert all(len(m.node_edges[i]) == 2 for i in range(3))
    check_invariants(m)


def test_structured_interior_vertex_fan():
    m = grid(4, 4, alternate=False)
    assert m.n_elements == 32
    v = int(np.argmin(np.linalg.norm(m.nodes - [0.5, 0.5], axis=1)))
    p = patch(m, v)
    assert len(p.elements) == 6 and len(p.edges) == 6
    assert p.closed
    # hand enumeration: axis neighbours plus one diagonal pair
    h = 0.25
    edge_vecs = set()
    for g in p.edges:
        other = m.edges[g][m.edges[g] != v][0]
        edge_vecs.add(tuple(np.round((m.nodes[other] - m.nodes[v]) / h).astype(int)))
    axis = {(1, 0), (-1, 0), (0, 1), (0, -1)}
    assert edge_vecs in (axis | {(1, 1), (-1, -1)}, axis | {(1, -1), (-1, 1)})


def test_refine_counts():
    m = two_triangles()
    r1 = refine_uniform(m, 1)
    assert r1.n_elements == 8 and r1.n_edges == 16
    assert refine_uniform(m, 0) is m
    assert refine_uniform(m, 3).n_elements == 128
    with pytest.raises(ValueError):
        refine_uniform(m, -1)


def test_refine_nested_and_area():
    m = grid(3, 2, jitter=0.3)
    r = refine_uniform(m, 2)
    np.testing.assert_array_equal(r.nodes[:m.n_nodes], m.nodes)
    assert abs(r.areas.sum() - m.areas.sum()) <= 1e-12 * m.areas.sum()
    np.testing.assert_allclose(np.bincount(r.parent, weights=r.areas), m.areas, rtol=1e-12)
    # children inherit the boundary tags of their parent edges
    assert r.boundary_tag[r.is_boundary_edge].tolist().count(DIRICHLET) == 4 * 2
    check_invariants(r)


def test_prolongate_is_exact_for_affine_fields():
    m = grid(3, 3, jitter=0.3)
    r = refine_uniform(m, 2)
    f = lambda x: np.column_stack([1 + 2 * x[:, 0] - x[:, 1], 3 * x[:, 1]])
    np.testing.assert_allclose(prolongate(r, f(m.nodes)), f(r.nodes), atol=1e-14)


def test_patch_corners():
    m = two_triangles()
    sizes = {tuple(m.nodes[v]): len(patch(m, v).elements) for v in range(4)}
    # the diagonal runs from (0,0) to (1,1)
    assert sizes == {(0.0, 0.0): 2, (1.0, 0.0): 1, (1.0, 1.0): 2, (0.0, 1.0): 1}
    for v in range(4):
        p = patch(m, v)
        assert len(p.edges) == len(p.elements) + 1
        assert not p.closed


def test_patch_open_fan_on_boundary():
    m = grid(4, 4)
    v = int(np.argmin(np.linalg.norm(m.nodes - [0.5, 0.0], axis=1)))
    p = patch(m, v)
    assert len(p.edges) == len(p.elements) + 1
    assert p.on_neumann.sum() == 2 and not p.on_dirichlet.any()
    left = int(np.argmin(np.linalg.norm(m.nodes - [0.0, 0.5], axis=1)))
    assert patch(m, left).on_dirichlet.sum() == 2
    with pytest.raises(IndexError):
        patch(m, m.n_nodes)


def test_non_manifold_edge():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [1.5, 0.5]])
    tris = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
    with pytest.raises(MeshError, match="non-manifold"):
        build_topology(nodes, tris, CLAMP_LEFT)


def test_inverted_triangle():
    with pytest.raises(MeshError, match="inverted"):
        build_topology(SQUARE, [[0, 2, 1], [0, 2, 3]], CLAMP_LEFT)


def test_untagged_boundary_edge():
    with pytest.raises(MeshError, match="not matched"):
        build_topology(SQUARE, [[0, 1, 2], [0, 2, 3]], CLAMP_LEFT[:1])


def test_bad_indices_and_rules():
    with pytest.raises(MeshError):
        build_topology(SQUARE, [[0, 1, 7]], CLAMP_LEFT)
    with pytest.raises(MeshError):
        BoundaryRule("g", "robin")
    with pytest.raises(MeshError):
        BoundaryRule("g", "dirichlet", components=())


def test_per_component_dirichlet():
    rules = [BoundaryRule("roll", "dirichlet", box(ymax=0.0), (1,)), BoundaryRule("rest", "neumann")]
    m = build_topology(SQUARE, [[0, 1, 2], [0, 2, 3]], rules)
    g = np.nonzero(m.fixed.any(axis=1))[0]
    assert len(g) == 1
    np.testing.assert_array_equal(m.fixed[g[0]], [False, True])
    np.testing.assert_array_equal(m.neumann_mask[g[0]], [True, False])


def test_derived_arrays_are_read_only():
    m = two_triangles()
    with pytest.raises(ValueError):
        m.areas[0] = 1.0


def test_mesh_file_round_trip(tmp_path):
    m = grid(3, 2, jitter=0.3)
    path = tmp_path / "grid.msh"
    write_mesh(m, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.nodes, m.nodes)
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_array_equal(back.edges, m.edges)
    np.testing.assert_array_equal(back.boundary_tag, m.boundary_tag)
    np.testing.assert_array_equal(back.fixed, m.fixed)


@pytest.mark.parametrize("text,match", [
    ("", "empty"),
    ("nodes 3\n", "header"),
    ("nodes 3 elements 1\n0 0\n1 0\n", "expected"),
    ("nodes 3 elements 1\n0 0\n1 0\n0 1\n0 1 2\nboundary g clamp\n", "tag"),
    ("nodes 3 elements 1\n0 0\n1 0\n0 1\n0 1 2\nboundary g neumann color=red\n", "unknown key"),
])
def test_mesh_file_errors(tmp_path, text, match):
    path = tmp_path / "bad.msh"
    path.write_text(text)
    with pytest.raises(MeshError, match=match):
        read_mesh(path)


def test_mesh_file_with_comments(tmp_path):
    path = tmp_path / "tri.msh"
    path.write_text("# one triangle\nnodes 3 elements 1\n0 0\n1 0\n0 1\n0 1 2\n"
                    "boundary base dirichlet components=y box=-1,2,0,0\n"
                    "boundary rest neumann\n")
    m = read_mesh(path)
    assert m.n_elements == 1 and m.fixed.sum() == 1


@given(st.integers(1, 5), st.integers(1, 5), st.booleans(), st.floats(0.0, 0.4),
       st.integers(0, 2 ** 16))
def test_topology_invariants_random_grids(nx, ny, alternate, jitter, seed):
    m = grid(nx, ny, alternate, jitter, seed)
    check_invariants(m)
    assert m.n_edges == m.n_nodes + m.n_elements - 1        # Euler, simply connected
    r = refine_uniform(m, 1)
    assert r.n_elements == 4 * m.n_elements
    assert abs(r.areas.sum() - 1.0) <= 1e-12
