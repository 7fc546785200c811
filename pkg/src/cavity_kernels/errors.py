"""Exception hierarchy.

Everything raised on purpose by the library derives from
:class:`CavityKernelsError`, so the CLI can map failures onto exit codes.
"""


class CavityKernelsError(Exception):
    """Base class for library errors."""


class ValidationError(CavityKernelsError, ValueError):
    """Bad input (geometry, parameters, configuration)."""


class NumericalError(CavityKernelsError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class CoincidentPoints(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class DegenerateStep(ValidationError):
    pass


class DimensionCap(ValidationError):
    pass


class RegimeViolation(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class UnknownQuantityKind(ValidationError, KeyError):
    pass


class StaticPole(ValidationError):
    """G itself was requested at zero frequency, where it has a pole."""


class NonConvergent(NumericalError):
    pass


class QuadratureFail(NumericalError):
    pass


class ImaginaryResidue(NumericalError):
    """A kernel that must be real came out with a sizeable imaginary part."""
