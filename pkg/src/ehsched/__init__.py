"""Optimal transmission scheduling for an energy-harvesting sensor and a remote estimator."""

from .belief import BudgetExceeded, JointBelief, Prescription, exact_cost
from .dist import Pmf, asu_about, majorizes, threshold_prescription
from .model import (DistortionSpec, EstimatorRule, GaussianSpec, ProblemSpec, SourceSpec,
                    monte_carlo_cost, sample_trajectory)
from .oracle import enumerate_all, estimator_structure_check, threshold_family_dp
from .solver import (GridTooSmall, RadialGridCfg, StructuralViolation, ThresholdPolicy,
                     ValueTable, expected_cost, extract_thresholds, solve, solve_discrete,
                     solve_gaussian_radial, solve_iid)

__all__ = [
    "BudgetExceeded", "DistortionSpec", "EstimatorRule", "GaussianSpec", "GridTooSmall",
    "JointBelief", "Pmf", "Prescription", "ProblemSpec", "RadialGridCfg", "SourceSpec",
    "StructuralViolation", "ThresholdPolicy", "ValueTable", "asu_about", "enumerate_all",
    "estimator_structure_check", "exact_cost", "expected_cost", "extract_thresholds",
    "majorizes", "monte_carlo_cost", "sample_trajectory", "solve", "solve_discrete",
    "solve_gaussian_radial", "solve_iid", "threshold_family_dp", "threshold_prescription",
]
