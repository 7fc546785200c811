"""Cavity-induced electrostatic and magnetostatic coupling kernels.

Natural units (hbar = c = eps0 = mu0 = 1) throughout; see :mod:`.units`
for SI conversion.
"""

from .couplings import (KernelResult, delta_coefficients, free_space_lambda_ee_reference,
                        free_space_lambda_mm_reference, lambda_em, lambda_ee, lambda_kernel,
                        lambda_me, lambda_mm)
from .errors import (CavityKernelsError, CoincidentPoints, DegenerateStep, DimensionCap,
                     ImaginaryResidue, NonConvergent, NotPositiveDefinite, NumericalError,
                     OutOfDomain, QuadratureFail, RegimeViolation, StaticPole,
                     UnknownQuantityKind, ValidationError)
from .greens import (FreeSpace, GreensProvider, MirrorHalfSpace, StaticLimits,
                     SyntheticNonreciprocal, free_space_G, make_provider, mirror_halfspace_G,
                     static_limits, synthetic_nonreciprocal_G)
from .hamiltonian import (Constituent, DensityGrid, DipoleSite, density_interaction_energy,
                          diamagnetic_renormalization_dipole, effective_operator_matrix,
                          pairwise_dipole_energy)
from .mode_sum import (ModeFamilyGreens, PlanarCavityModes, diamagnetic_omega_modesum,
                       lambda_modesum, planar_cavity_modes, planar_closed_form)
from .oracle_exact import (OscillatorModel, build_full_hamiltonian, effective_vs_exact_sweep,
                           gaussian_integral_identity_check, partition_function)
from .spectral import (ContourSpec, contour_integral, diamagnetic_omega_spectral,
                       diamagnetic_ratio, lambda_spectral, residue_decomposition)
from .tensor_core import TensorField2, left_curl, right_curl, two_sided_curl
from .units import convert_units

__version__ = "0.1.0"
