"""Compiled versus pure-Python patch kernels.

Times the per-vertex kernels over every vertex of a refined cantilever
mesh, then a full EESPT traction recovery with each backend::

    python3 benchmarks/bench_kernels.py [--levels 2] [--repeat 5]
"""
import argparse
import time
from unittest import mock

import numpy as np
import scipy.linalg as sla

from crebound import _pykernels, eespt, kernels
from crebound.fem import assemble_solve
from crebound.fixtures import get_fixture
from crebound.mesh import refine_uniform


def patch_arguments(mesh):
    args = []
    for v in range(mesh.n_nodes):
        edges, elems = mesh.node_edges[v], mesh.node_elems[v]
        col = np.full(mesh.n_edges, -1, dtype=np.int64)
        col[edges] = np.arange(len(edges))
        args.append((np.ascontiguousarray(mesh.edges[edges], dtype=np.int64),
                     np.ascontiguousarray(mesh.edge_lengths[edges]),
                     np.ascontiguousarray(mesh.triangles[elems], dtype=np.int64),
                     np.ascontiguousarray(col[mesh.elem_edges[elems]]),
                     np.ascontiguousarray(mesh.eta[elems], dtype=float)))
    return args


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, default=2, help="uniform refinements")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    fx = get_fixture("cantilever_sensor")
    mesh = refine_uniform(fx.mesh, args.levels)
    sol = assemble_solve(mesh, fx.material, fx.loads)
    print(f"cantilever_sensor, {args.levels} refinements: {mesh.n_nodes} vertices, "
          f"{mesh.n_elements} elements; compiled backend: {kernels.BACKEND}")

    backends = {"python": _pykernels}
    if kernels.BACKEND == "cython":
        from crebound import _ckernels
        backends["cython"] = _ckernels
    else:
        print("compiled kernels not built; timing the Python fallback only")

    patches = patch_arguments(mesh)
    operators = [_pykernels.patch_operator(*a) for a in patches]
    kernels_ = [sla.null_space(A) for A in operators]

    rows = []
    for name, mod in backends.items():
        t_op = best_of(lambda: [mod.patch_operator(*a) for a in patches], args.repeat)
        t_rows = best_of(lambda: [mod.independent_rows(N) for N in kernels_], args.repeat)
        with mock.patch.object(eespt, "patch_operator", mod.patch_operator), \
                mock.patch.object(eespt, "independent_rows", mod.independent_rows):
            t_full = best_of(lambda: eespt.run_eespt(sol), max(1, args.repeat // 2))
        rows.append((name, t_op, t_rows, t_full))

    print(f"{'backend':10s}{'patch_operator':>16s}{'independent_rows':>18s}{'run_eespt':>12s}")
    for name, t_op, t_rows, t_full in rows:
        print(f"{name:10s}{t_op:15.4f}s{t_rows:17.4f}s{t_full:11.3f}s")
    if len(rows) == 2:
        py, cy = rows
        print(f"speed-up  {py[1] / cy[1]:15.1f}x{py[2] / cy[2]:17.1f}x{py[3] / cy[3]:11.2f}x")


if __name__ == "__main__":
    main()
