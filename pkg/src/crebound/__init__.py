"""Guaranteed a posteriori error bounds for 2D linear elasticity.

The package solves plane-stress problems with linear triangles and bounds
the energy-norm discretization error from above with the constitutive
relation error of a statically admissible stress. Three reconstructions
are provided: element equilibration of tractions (EET), flux-free star
patches (SPET) and the hybrid element/star-patch traction scheme (EESPT).

Typical use::

    from crebound import get_fixture, assemble_solve, estimate

    fx = get_fixture("cantilever_sensor")
    solution = assemble_solve(fx.mesh, fx.material, fx.loads)
    report = estimate(solution, "EET", cost="J0")
    print(report.theta, report.eta)
"""
from .errors import (CompatibilityError, ConfigError, CreboundError, EquilibriumError,
                     MeshError, NestednessError, NumericalError, SingularSystemError,
                     ValidationError)
from .mesh import BoundaryRule, Mesh, build_topology, patch, read_mesh, refine_uniform, write_mesh
from .fem import FemSolution, LoadCase, Material, assemble_solve, complementary_norm, energy_norm
from .equil import CostKind, TractionField
from .eet import run_eet
from .eespt import run_eespt
from .spet import run_spet
from .local import AdmissibleStress, LocalSpace, solve_element, solve_elements
from .reference import ReferenceResult, reference_error
from .estimator import (ErrorReport, admissible_stress, cre, effectivity, estimate,
                        prager_synge_check)
from .fixtures import FIXTURES, get_fixture
from .config import CaseConfig, load_config
from .cli import run_case

__version__ = "0.1.0"

__all__ = [
    "AdmissibleStress", "BoundaryRule", "CaseConfig", "CompatibilityError", "ConfigError",
    "CostKind", "CreboundError", "EquilibriumError", "ErrorReport", "FIXTURES", "FemSolution",
    "LoadCase", "LocalSpace", "Material", "Mesh", "MeshError", "NestednessError",
    "NumericalError", "ReferenceResult", "SingularSystemError", "TractionField",
    "ValidationError", "admissible_stress", "assemble_solve", "build_topology",
    "complementary_norm", "cre", "effectivity", "energy_norm", "estimate", "get_fixture",
    "load_config", "patch", "prager_synge_check", "read_mesh", "reference_error",
    "refine_uniform", "run_case", "run_eespt", "run_eet", "run_spet", "solve_element",
    "solve_elements", "write_mesh",
]
