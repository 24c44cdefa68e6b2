"""Mild solutions of semilinear SPDEs with additive noise in spectral coordinates.

The operator A is represented by its eigenvalues; the solution is built as the
fixed point of the variation-of-constants map and checked against the
regularity, moment, dependence and Gronwall estimates that govern it.
"""

__version__ = "0.1.0"

from .errors import ConvergenceError, EstimateViolation, InputError, ToleranceNotMet
from .spectral import SpectralOperator, apply_fractional_power, apply_semigroup
from .holder import ExponentSet, Trajectory, check_membership, weighted_holder_norm
from .noise import NoiseModel, sample_wiener_increments
from .convolution import WeightedForcing, deterministic_convolution, stochastic_convolution_sample
from .solver import (InitialCondition, Nonlinearity, ProblemInstance, SolverConfig, choose_T_loc,
                     solve_mild)
from .problems import Example1Params, build_example1, build_linear_instance

__all__ = [
    "ConvergenceError", "EstimateViolation", "InputError", "ToleranceNotMet",
    "SpectralOperator", "apply_fractional_power", "apply_semigroup",
    "ExponentSet", "Trajectory", "check_membership", "weighted_holder_norm",
    "NoiseModel", "sample_wiener_increments",
    "WeightedForcing", "deterministic_convolution", "stochastic_convolution_sample",
    "InitialCondition", "Nonlinearity", "ProblemInstance", "SolverConfig", "choose_T_loc",
    "solve_mild", "Example1Params", "build_example1", "build_linear_instance",
]
