"""Exception hierarchy.

Validation errors signal bad input (mesh, configuration); numerical errors
signal a failed solve or a violated consistency condition.
"""


class CreboundError(Exception):
    """Base class for all package errors."""


class ValidationError(CreboundError, ValueError):
    pass


class MeshError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NumericalError(CreboundError, ArithmeticError):
    pass


class SingularSystemError(NumericalError):
    pass


class CompatibilityError(NumericalError):
    """A local equilibration system is inconsistent with the FE solution."""


class EquilibriumError(NumericalError):
    """Boundary tractions handed to a local solve are not self-equilibrated."""


class NestednessError(NumericalError):
    """The energy-difference reference error came out negative."""
