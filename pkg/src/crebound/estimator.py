"""Constitutive relation error and effectivity indices.

The estimate of a displacement solution ``u_h`` is the complementary
energy norm of ``sigma_hat - D eps(u_h)``, where ``sigma_hat`` is a
statically admissible stress built by one of the three reconstructions.
The displacement side of the constitutive gap is always ``u_h`` itself.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from . import eespt, eet, spet
from .equil import CostKind
from .errors import ConfigError
from .local import AdmissibleStress, LocalSpace, solve_elements
from .reference import reference_error

__all__ = ["ErrorReport", "Method", "cre", "prager_synge_check", "local_effectivity",
           "effectivity", "admissible_stress", "estimate", "BOUND_TOL", "LOCAL_CUTOFF"]

BOUND_TOL = 1e-9
#: reference contributions below this fraction of the largest one get no local index
LOCAL_CUTOFF = 1e-14

METHODS = ("EET", "SPET", "EESPT")


class Method:
    """Normalized method labels."""

    EET, SPET, EESPT = METHODS

    @staticmethod
    def parse(value):
        name = str(value).strip().upper()
        if name not in METHODS:
            raise ConfigError(f"unknown method {value!r}; use one of {', '.join(METHODS)}")
        return name


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Outcome of one estimator run on one solution.

    ``cost`` is ``None`` for SPET, which has no cost function.
    ``local_eta`` holds NaN where the reference contribution is too small
    for the ratio to mean anything.
    """

    method: str
    cost: str | None
    theta: float
    ref_error: float
    eta: float
    contributions: np.ndarray
    ref_contributions: np.ndarray
    local_eta: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def bound_holds(self):
        return prager_synge_check(self.theta, self.ref_error)

    @property
    def local_range(self):
        """``(min, max)`` of the defined local indices."""
        defined = self.local_eta[np.isfinite(self.local_eta)]
        if defined.size == 0:
            return (np.nan, np.nan)
        return float(defined.min()), float(defined.max())

    @property
    def additivity_gap(self):
        """Relative gap between ``theta^2`` and the summed squared contributions."""
        total = float(np.sum(self.contributions ** 2))
        if self.theta == 0.0:
            return total
        return abs(self.theta ** 2 - total) / self.theta ** 2

    @property
    def wall_time(self):
        return float(sum(self.timings.values()))


def cre(solution, admissible, material=None):
    """Global constitutive relation error and its element contributions.

    ``admissible`` is an :class:`AdmissibleStress`; its ``base`` field must
    describe ``solution.u``. ``material`` defaults to the one the
    admissible stress was built with.
    """
    if not isinstance(admissible, AdmissibleStress):
        raise TypeError("admissible must be an AdmissibleStress")
    if admissible.space.mesh is not solution.mesh:
        raise ValueError("admissible stress lives on a different mesh")
    if material is not None and material != admissible.space.material:
        space = LocalSpace(solution.mesh, material, admissible.space.degree)
        admissible = AdmissibleStress(space, admissible.coeffs, admissible.base, admissible.label)
    local = np.sqrt(np.maximum(admissible.correction_energy(), 0.0))
    return float(np.sqrt(np.sum(local ** 2))), local


def prager_synge_check(theta, reference_error):
    """True when ``theta`` bounds the reference error up to ``BOUND_TOL``."""
    return bool(theta >= reference_error * (1.0 - BOUND_TOL))


def local_effectivity(contributions, ref_contributions, cutoff=LOCAL_CUTOFF):
    """Element ratios ``theta_E / e_E``, NaN where ``e_E`` is negligible."""
    contributions = np.asarray(contributions, dtype=float)
    ref = np.asarray(ref_contributions, dtype=float)
    if contributions.shape != ref.shape:
        raise ValueError("contribution maps differ in size")
    out = np.full(ref.shape, np.nan)
    if ref.size == 0:
        return out
    keep = ref > cutoff * ref.max()
    out[keep] = contributions[keep] / ref[keep]
    return out


def effectivity(method, cost, contributions, reference, timings=None):
    """Assemble an :class:`ErrorReport`.

    ``reference`` is either a :class:`~crebound.reference.ReferenceResult`
    or a pair ``(value, per_element)``.
    """
    contributions = np.asarray(contributions, dtype=float)
    if hasattr(reference, "per_element"):
        ref_value, ref_local = reference.value, reference.per_element
    else:
        ref_value, ref_local = reference
    ref_local = np.asarray(ref_local, dtype=float)
    theta = float(np.sqrt(np.sum(contributions ** 2)))
    eta = theta / ref_value if ref_value > 0 else np.nan
    return ErrorReport(method=Method.parse(method), cost=None if cost is None else str(cost),
                       theta=theta, ref_error=float(ref_value), eta=float(eta),
                       contributions=contributions, ref_contributions=ref_local,
                       local_eta=local_effectivity(contributions, ref_local),
                       timings=dict(timings or {}))


def admissible_stress(solution, method, cost="J0", k=3, penalty=eespt.DEFAULT_PENALTY,
                      pinning="mean"):
    """Statically admissible stress of ``method`` and per-phase wall-clock times.

    ``k`` raises the element degree above the FE degree for the EET and
    EESPT element solves; SPET always uses the degree-4 patch space.
    """
    method = Method.parse(method)
    if int(k) not in (1, 2, 3):
        raise ConfigError(f"k must be 1, 2 or 3, got {k}")
    timings = {}
    t0 = time.perf_counter()
    if method == Method.SPET:
        _, _, adm = spet.run_spet(solution)
        timings["patches"] = time.perf_counter() - t0
        return adm, timings
    cost = CostKind.parse(cost)
    if method == Method.EET:
        tractions = eet.run_eet(solution, cost)
    else:
        tractions = eespt.run_eespt(solution, cost, penalty)
    t1 = time.perf_counter()
    timings["tractions"] = t1 - t0
    space = LocalSpace(solution.mesh, solution.material, solution.degree + int(k))
    coeffs = solve_elements(space, tractions, solution.loads, pinning)
    base = space.linear_coefficients(solution.u)
    adm = AdmissibleStress(space, coeffs, base, method.lower())
    timings["elements"] = time.perf_counter() - t1
    return adm, timings


def estimate(solution, method, cost="J0", k=3, penalty=eespt.DEFAULT_PENALTY, *,
             reference=None, levels=2, pinning="mean"):
    """Run one estimator and compare it with the reference error.

    ``reference`` may be passed in to share one overkill solve between
    several estimators; otherwise it is computed with ``levels``.
    """
    method = Method.parse(method)
    adm, timings = admissible_stress(solution, method, cost, k, penalty, pinning)
    t0 = time.perf_counter()
    _, local = cre(solution, adm)
    timings["cre"] = time.perf_counter() - t0
    if reference is None:
        reference = reference_error(solution, levels)
    label = None if method == Method.SPET else CostKind.parse(cost).value
    return effectivity(method, label, local, reference, timings)
