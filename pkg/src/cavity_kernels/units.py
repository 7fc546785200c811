"""Conversion between natural units (hbar = c = eps0 = mu0 = 1) and SI.

Natural units leave one scale free; it is the length unit ``length_m``
(metres per natural length unit).  Every quantity kind has an SI factor
``hbar^a c^b eps0^e L^l``, fixed by its dimension.  CODATA values come
from :mod:`scipy.constants`.
"""

from scipy import constants

from .errors import UnknownQuantityKind, ValidationError

HBAR = constants.hbar
C = constants.c
EPS0 = constants.epsilon_0
MU0 = constants.mu_0

# exponents of (hbar, c, eps0, length) giving one natural unit in SI
_DIMENSIONS = {
    "dimensionless": (0, 0, 0, 0),
    "length": (0, 0, 0, 1),
    "time": (0, -1, 0, 1),
    "angular_frequency": (0, 1, 0, -1),
    "velocity": (0, 1, 0, 0),
    "energy": (1, 1, 0, -1),
    "mass": (1, -1, 0, -1),
    "charge": (0.5, 0.5, 0.5, 0),
    "electric_dipole": (0.5, 0.5, 0.5, 1),
    "magnetic_dipole": (0.5, 1.5, 0.5, 1),
    "polarization": (0.5, 0.5, 0.5, -2),
    "magnetization": (0.5, 1.5, 0.5, -2),
    "electric_field": (0.5, 0.5, -0.5, -2),
    "magnetic_field": (0.5, -0.5, -0.5, -2),
    "permittivity": (0, 0, 1, 0),
    "permeability": (0, -2, -1, 0),
    # G has units of 1 / length
    "greens": (0, 0, 0, -1),
    # d . lambda^ee . d is an energy
    "lambda_ee": (0, 0, -1, -3),
    "lambda_em": (0, -1, -1, -3),
    "lambda_me": (0, -1, -1, -3),
    "lambda_mm": (0, -2, -1, -3),
    # equal-time B (x) B correlation
    "omega_tensor": (1, -1, -1, -4),
}

QUANTITY_KINDS = tuple(sorted(_DIMENSIONS))


def si_factor(kind, length_m=1.0):
    """SI value of one natural unit of ``kind``."""
    try:
        a, b, e, l = _DIMENSIONS[kind]
    except KeyError:
        raise UnknownQuantityKind(f"unknown quantity kind {kind!r}; "
                                  f"known kinds: {', '.join(QUANTITY_KINDS)}") from None
    if not length_m > 0:
        raise ValidationError("length unit must be positive")
    return HBAR**a * C**b * EPS0**e * length_m**l


def convert_units(value, kind, direction, length_m=1.0):
    """Convert ``value`` of quantity ``kind``; ``direction`` is ``"to_si"`` or ``"to_natural"``."""
    f = si_factor(kind, length_m)
    if direction == "to_si":
        return value * f
    if direction == "to_natural":
        return value / f
    raise ValidationError(f"direction must be 'to_si' or 'to_natural', got {direction!r}")
