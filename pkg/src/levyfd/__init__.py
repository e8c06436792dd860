"""Finite-difference schemes for degenerate parabolic equations with Lévy jump operators."""

from .errors import LevyFDError
from .grid import GridFunction, GridSpec, delta_forward, delta_sym, norm_l2, norm_sup, restrict
from .integrator import ProblemSpec, TimeGrid, check_solvability, implicit_euler_solve, semidiscrete_solve
from .levy import (AtomicMeasure, CompoundPoisson, LevyMeasure, PowerLaw, TemperedPowerLaw, cell_mass,
                   cell_second_moment, global_moments, make_measure, tail_truncation_index, zero_measure)
from .operators import (CoefficientSet, SpatialOperator, apply_J, apply_J1, apply_J1_direct, apply_J2, apply_L,
                        assemble, build_weights)
from .reference import Bump, ManufacturedProblem, PolyBump, SmoothProfile, continuous_J, make_profile

__version__ = "0.1.0"
