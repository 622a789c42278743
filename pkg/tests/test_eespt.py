import numpy as np
import pytest
import scipy.linalg as sla

from crebound import _pykernels, eespt, kernels
from crebound.equil import all_node_load_vectors, fe_stress_projections, neumann_projection

from conftest import solved
from oracles import qp_oracle


def share_moments(mesh, vertex, f_hat, edges):
    """``int f_G lambda_j`` against the far node of every patch edge."""
    f = f_hat.reshape(-1, 2, 2)
    out = []
    for j, g in enumerate(edges):
        a = int(mesh.edges[g, 1] == vertex)
        out.append(mesh.edge_lengths[g] / 6 * (f[j, a] + 2 * f[j, 1 - a]))
    return np.array(out)


def test_constant_projection_shares_are_reflections():
    c = np.array([0.3, -1.7])
    shares = eespt.edge_targets(np.array([c, c]), length=2.5)
    # g_low = (2c, -c) and g_high = (-c, 2c) solve the split by hand
    np.testing.assert_allclose(shares[0], [2 * c, -c], rtol=1e-14)
    np.testing.assert_allclose(shares[1], [-c, 2 * c], rtol=1e-14)
    np.testing.assert_allclose(shares[0] + shares[1], [c, c], rtol=1e-14)


def test_edge_targets_against_dense_oracle(rng):
    proj = rng.normal(size=(5, 2, 2))
    lengths = rng.uniform(0.1, 3.0, size=5)
    shares = eespt.edge_targets(proj, lengths)
    for p, l, s in zip(proj, lengths, shares):
        M = l / 6 * np.array([[2.0, 1.0], [1.0, 2.0]])
        for c in range(2):
            # unknowns (low share at both nodes, high share at both nodes)
            A = np.vstack([np.hstack([np.eye(2), np.eye(2)]),
                           np.hstack([M[1], np.zeros(2)]),
                           np.hstack([np.zeros(2), M[0]])])
            x = np.linalg.pinv(A) @ np.concatenate([p[:, c], [0.0, 0.0]])
            np.testing.assert_allclose(s[0, :, c], x[:2], rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(s[1, :, c], x[2:], rtol=1e-12, atol=1e-14)
            assert abs(M[1] @ s[0, :, c]) <= 1e-12 * np.abs(p).max()
            assert abs(M[0] @ s[1, :, c]) <= 1e-12 * np.abs(p).max()


def test_patch_test_targets_are_exact(uniaxial):
    mesh = uniaxial.mesh
    for v in range(mesh.n_nodes):
        system = eespt.build_patch_system(uniaxial, v)
        f_hat = eespt.solve_patch_system(system)
        np.testing.assert_allclose(f_hat, system.target, atol=1e-10)
    F = eespt.run_eespt(uniaxial)
    np.testing.assert_allclose(F.coeffs, fe_stress_projections(uniaxial), atol=1e-10)
    for g in range(mesh.n_edges):
        n = mesh.edge_normals[g]
        np.testing.assert_allclose(F.coeffs[g], [[n[0], 0.0]] * 2, atol=1e-10)


@pytest.mark.parametrize("name", ["shear_pair", "cantilever_sensor"])
def test_kernel_dimension(name):
    sol = solved(name)
    mesh = sol.mesh
    for v in range(mesh.n_nodes):
        system = eespt.build_patch_system(sol, v)
        n = len(system.elements)
        assert system.A.shape == (4 * len(system.edges), 6 * n)
        rank = np.linalg.matrix_rank(system.A)
        dim = system.kernel.shape[1]
        assert dim == 6 * n - rank
        # continuous fan fields vanishing on the boundary edges through the vertex
        on_boundary = mesh.is_boundary_edge[system.edges].any()
        assert dim == (2 * (n - 1) if on_boundary else 2 * (n + 1))
        assert len(system.fixed) == dim
        assert np.linalg.matrix_rank(system.A_red) == system.A_red.shape[1]


@pytest.mark.parametrize("cost", ["J0", "J1", "J2"])
def test_shear_pair_matches_qp_oracle(shear, cost):
    for v in range(shear.mesh.n_nodes):
        system = eespt.build_patch_system(shear, v, cost)
        f_hat = eespt.solve_patch_system(system)
        ref = qp_oracle(system)
        assert np.abs(f_hat - ref).max() <= 1e-9 * np.abs(ref).max()
        assert system.constraint_residual(f_hat) <= 1e-10


def test_implicit_moment_conditions(cantilever):
    mesh = cantilever.mesh
    for v in range(0, mesh.n_nodes, 3):
        system = eespt.build_patch_system(cantilever, v)
        f_hat = eespt.solve_patch_system(system)
        mom = share_moments(mesh, v, f_hat, system.edges)
        assert np.abs(mom).max() <= 1e-9 * np.abs(f_hat).max()


def test_penalty_sweep_tightens_neumann_data(cantilever):
    mesh = cantilever.mesh
    data = neumann_projection(mesh, cantilever.edge_moments)
    shares = eespt.edge_targets(data, mesh.edge_lengths)
    # loaded vertex at the end of the traction zone
    v = int(np.argmin(np.linalg.norm(mesh.nodes - [1.0, 2.0], axis=1)))
    devs = []
    for penalty in (1e3, 1e5, 1e7):
        system = eespt.build_patch_system(cantilever, v, penalty=penalty)
        f_hat = eespt.solve_patch_system(system).reshape(-1, 2, 2)
        a = (mesh.edges[system.edges, 1] == v).astype(int)
        want = shares[system.edges, a]
        mask = np.broadcast_to(mesh.neumann_mask[system.edges][:, None, :], want.shape)
        devs.append(np.abs(f_hat - want)[mask].max())
    assert devs[0] > devs[1] > devs[2]
    assert devs[1] <= 1e-4


@pytest.mark.parametrize("name", ["patch_test", "shear_pair", "cantilever_sensor",
                                  "plate_with_hole_quarter"])
def test_recovered_tractions_equilibrate(name):
    sol = solved(name)
    F = eespt.run_eespt(sol)
    assert F.equilibrium_residuals(sol.body_moments).max() <= 1e-9
    assert F.neumann_mismatch(sol) <= 1e-4
    # broken-linear weak equilibrium: every element balances its FE vertex loads
    Q = all_node_load_vectors(sol)
    assert np.abs(F.element_nodal_forces() - Q).max() <= 1e-9 * np.abs(Q).max()


def test_penalty_must_be_positive(shear):
    with pytest.raises(ValueError):
        eespt.build_patch_system(shear, 0, penalty=0.0)


def test_compiled_kernels_match_python(cantilever):
    if kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    from crebound import _ckernels
    mesh = cantilever.mesh
    for v in range(0, mesh.n_nodes, 7):
        edges, elems = mesh.node_edges[v], mesh.node_elems[v]
        col = np.full(mesh.n_edges, -1, dtype=np.int64)
        col[edges] = np.arange(len(edges))
        args = (np.ascontiguousarray(mesh.edges[edges], dtype=np.int64),
                np.ascontiguousarray(mesh.edge_lengths[edges]),
                np.ascontiguousarray(mesh.triangles[elems], dtype=np.int64),
                np.ascontiguousarray(col[mesh.elem_edges[elems]]),
                np.ascontiguousarray(mesh.eta[elems], dtype=float))
        A_c = _ckernels.patch_operator(*args)
        A_py = _pykernels.patch_operator(*args)
        np.testing.assert_array_equal(A_c, A_py)
        N = sla.null_space(A_py)
        np.testing.assert_array_equal(_ckernels.independent_rows(N, 1e-8),
                                      _pykernels.independent_rows(N, 1e-8))


def test_independent_rows_picks_first_spanning_rows():
    N = np.linalg.qr(np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [0.0, 1.0], [5.0, 5.0]]))[0]
    np.testing.assert_array_equal(_pykernels.independent_rows(N), [1, 3])
