"""latticetrap: numerical models of layered planar rf lattice ion traps."""

__version__ = "0.1.0"

from .params import DriveConfig, IonSpecies, ion_from_units, macroion_from_q_over_m, sr88_ion  # noqa: F401
from .geometry import BoundaryGrid, ElectrodeStack, build_lattice_stack, rasterize  # noqa: F401
from .fieldsolver import ScalarField3D, VectorField3D, gradient, multipole_potential, solve_laplace  # noqa: F401
from .pseudopot import (PseudoField, TrapSite, curvature_frequencies, find_site_minimum,  # noqa: F401
                        fit_multipole, fit_z1, pseudopotential, pseudopotential_analytic,
                        trap_depth)
from .dynamics import (AnalyticField, StabilityPoint, Trajectory, extract_secular_frequency,  # noqa: F401
                       integrate_trajectory, is_stable, mathieu_parameters, omega_z_biased,
                       secular_frequencies, stability_boundary, verify_biased_coefficient)
from .coulomb import (AnalyticConfinement, DisplacementResult, IonPair, fit_charge_to_mass,  # noqa: F401
                      screening_factor_image, two_ion_displacement_closed, two_ion_equilibrium)
from .scaling import CouplingParams, ScalingConstraint, j_coupling, lamb_dicke, scaling_scan  # noqa: F401
