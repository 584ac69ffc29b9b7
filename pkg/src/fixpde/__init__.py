"""Convolution fixed-point solver for first-order PDE systems on space-time boxes."""

from .grid import (DomainSpec, SpaceTimeGrid, build_grid, field_norm, forward_transform,
                   inverse_transform, set_threads, spectral_norm)
from .expr import DomainFault, ExpressionError, eval_expression, parse_expression
from .reduction import (CausalityReport, EquationSystem, ParameterSet, ReductionPlan,
                        assemble_symbol, build_plan, invert_symbol, validate_parameters)
from .spectral import (BoundaryData, KernelPair, boundary_spectra, causality_check,
                       jordan_inverse_transform, synthesize_kernels)
from .problems import ProblemSpec, builtin, load_problem
from .fixedpoint import SolverConfig, classical_residual, extract_solution, picard_solve
from .pipeline import Solution, solve_problem

__version__ = "0.1.0"
