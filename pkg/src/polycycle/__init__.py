"""Numerical workbench for hyperbolic polycycles of planar polynomial fields.

Builds fields whose regular n-gon is a polycycle with prescribed
hyperbolicity ratios, computes the alternation bound on the number of
bifurcating limit cycles, and carries out the bifurcation numerically:
Melnikov derivatives, displacement maps, connection breaking and cycle
detection.
"""
from importlib.metadata import PackageNotFoundError, version as _version

from .polyalg import AffineForm, LineForm, Poly2, VectorField2, divergence, eval_field, wedge
from .builder import (BuiltPolycycle, EdgeChart, PolycycleSpec, build_main3_family,
                      build_polycycle, saddle_data, verify_invariants)
from .graphic import (ExpulsionPlan, check_ch_conditions, delta_for_permutation, delta_max,
                      graphic_number, ratio_from_eigenvalues, stability)
from .approx import (ApproximationError, BernsteinPoly, BumpSpec, ShiftedBump, bernstein_of,
                     eval_bump, shifted_bump_polynomial)
from .flow import (FlowError, Saddle, Section, Trajectory, estimate_dulac_exponent, find_saddle,
                   integrate, return_map, shoot_separatrix, transition_map)
from .melnikov import (MelnikovReport, PerturbationFamily, melnikov_derivative,
                       melnikov_integrand, melnikov_matrix)
from .bifurcate import (INNER, OUTER, BypassDisplacement, CycleRecord, DisplacementVector,
                        ModelMapSpec, PolycycleFlow, bypass_displacement, check_without_contact,
                        detect_cycles, detect_sigma0, displacement_vector, hausdorff_distance,
                        model_map_eval, model_map_roots, solve_connection_break, trapping_curve)

try:
    __version__ = _version("polycycle")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
