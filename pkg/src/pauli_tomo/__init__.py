"""Qubit Pauli-channel tomography with unknown channel directions.

Forward simulation of the three-input / three-measurement experiment,
the linear-inversion estimator chain down to the six channel parameters,
exact and Monte Carlo risk evaluation, and numerical optimization of the
input and measurement directions.
"""

from .core import (ChannelParams, apply_channel, bloch_to_density,
                   canonicalize, compose_channel_matrix, cp_check,
                   measurement_probability, random_canonical_params,
                   rotation_matrix, rotation_product)
from .design_opt import (ConjectureReport, OptimizerConfig, TwoStepResult,
                         conjecture_report, optimize_angle_risk,
                         optimize_planar_risk, two_step_tomography)
from .experiment import (CountsMatrix, ExperimentDesign, build_frame,
                         estimate_channel_matrix, estimate_x, expected_counts,
                         forward_outcomes, sample_counts)
from .extraction import (DegenerateSpectrumError, DerivativeTable,
                         ParamEstimate, angle_distance, dT_components,
                         eig3_symmetric, extract_angles, extract_params,
                         linearized_estimates, symmetrize)
from .risk import (RiskReport, analytic_f, analytic_g_tilde, analytic_h2,
                   analytic_h_tilde, analytic_report, bound_f, bound_g,
                   coefficient_matrix, h2_optimal_design, mc_loss,
                   var_linear_combination)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "CountsMatrix", "ConjectureReport", "DerivativeTable",
    "DegenerateSpectrumError", "ExperimentDesign", "OptimizerConfig",
    "ParamEstimate", "RiskReport", "TwoStepResult",
    "analytic_f", "analytic_g_tilde", "analytic_h2", "analytic_h_tilde",
    "analytic_report", "angle_distance", "apply_channel", "bloch_to_density",
    "bound_f", "bound_g", "build_frame", "canonicalize",
    "coefficient_matrix", "compose_channel_matrix", "conjecture_report",
    "cp_check", "dT_components", "eig3_symmetric", "estimate_channel_matrix",
    "estimate_x", "expected_counts", "extract_angles", "extract_params",
    "forward_outcomes", "h2_optimal_design", "linearized_estimates",
    "mc_loss", "measurement_probability", "optimize_angle_risk",
    "optimize_planar_risk", "random_canonical_params", "rotation_matrix",
    "rotation_product", "sample_counts", "symmetrize",
    "two_step_tomography", "var_linear_combination",
]
