"""Reference discretization error from a nested overkill solution."""
from dataclasses import dataclass

import numpy as np

from .errors import NestednessError
from .fem import assemble_solve, energy_norm, p1_gradients, strain_matrices
from .mesh import prolongate, refine_uniform

__all__ = ["ReferenceResult", "reference_error", "NEGATIVE_TOL"]

NEGATIVE_TOL = 1e-12
#: smallest squared error, relative to the energy, the difference route resolves
RESOLUTION = 1e3 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class ReferenceResult:
    """Reference error of a coarse solution.

    ``value`` comes from the energy difference ``|u_ref|^2 - |u_h|^2`` when
    the Dirichlet data is homogeneous, otherwise from direct integration.
    ``direct`` always integrates ``u_ref - u_h`` on the fine mesh, and
    ``per_element`` aggregates it to the coarse elements.
    """

    value: float
    direct: float
    per_element: np.ndarray
    levels: int
    method: str
    fine: object = None

    @property
    def mismatch(self):
        """Relative gap between the two global routes."""
        if max(self.value, self.direct) == 0.0:
            return 0.0
        return abs(self.value - self.direct) / max(self.value, self.direct)


def _energy_product(mesh, material, u, v):
    B = strain_matrices(p1_gradients(mesh))
    eu = np.einsum("elj,ej->el", B, u[mesh.triangles].reshape(-1, 6))
    ev = np.einsum("elj,ej->el", B, v[mesh.triangles].reshape(-1, 6))
    return float(np.einsum("e,ek,kl,el->", mesh.areas, eu, material.D, ev))


def reference_error(solution, levels=2, keep_fine=False):
    """Error of ``solution`` measured against a solution ``levels`` refinements finer."""
    levels = int(levels)
    mesh = solution.mesh
    if levels == 0:
        return ReferenceResult(0.0, 0.0, np.zeros(mesh.n_elements), 0, "identical")
    fine_mesh = refine_uniform(mesh, levels)
    fine = assemble_solve(fine_mesh, solution.material, solution.loads)
    diff = fine.u - prolongate(fine_mesh, solution.u)
    direct, fine_local = energy_norm(fine_mesh, solution.material, diff)
    per_element = np.sqrt(np.bincount(fine_mesh.parent, weights=fine_local ** 2,
                                      minlength=mesh.n_elements))
    if solution.loads.homogeneous_dirichlet:
        # |u_ref|^2 - |u_h|^2 factored as a(u_ref - u_h, u_ref + u_h) on the
        # fine mesh; equal in exact arithmetic, but free of the cancellation
        # that buries small errors under the total energy
        radicand = _energy_product(fine_mesh, solution.material, diff,
                                   fine.u + prolongate(fine_mesh, solution.u))
        if radicand < -NEGATIVE_TOL * max(fine.energy_sq, 1e-300):
            raise NestednessError(
                f"reference energy falls below the coarse energy by {-radicand:.3e}; "
                "the meshes are not nested")
        if radicand > RESOLUTION * fine.energy_sq:
            value, method = float(np.sqrt(radicand)), "energy difference"
        else:
            # below round-off resolution the difference only carries noise of
            # size sqrt(eps) |u|; the direct integral stays accurate
            value, method = direct, "direct"
    else:
        value, method = direct, "direct"
    return ReferenceResult(value=value, direct=direct, per_element=per_element,
                          levels=levels, method=method, fine=fine if keep_fine else None)
