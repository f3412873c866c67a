"""Locally differentially private multi-sensor fusion estimation."""

__version__ = "0.1.0"

from .errors import BudgetOutOfRange, ConvergenceFailure, InvalidInput, SingularMatrix  # noqa: E402
from .system_model import SensorModel, SystemModel, validate_model  # noqa: E402
from .local_estimator import assemble_ensemble, solve_riccati, solve_cross_cov  # noqa: E402
from .privacy_mechanisms import (  # noqa: E402
    MechanismKind,
    PrivacyBudget,
    empirical_privacy_check,
    intrinsic_threshold,
    plan_mechanism,
    sensitivity_profile,
)
from .fusion_center import fuse, fused_covariance, fusion_weights, perturbed_stacked_cov  # noqa: E402
from .sim_harness import (  # noqa: E402
    build_oxygen_scenario,
    build_tracking_scenario,
    calibrate,
    rmse_summary,
    run_monte_carlo,
)

__all__ = [
    "BudgetOutOfRange",
    "ConvergenceFailure",
    "InvalidInput",
    "SingularMatrix",
    "SensorModel",
    "SystemModel",
    "validate_model",
    "assemble_ensemble",
    "solve_riccati",
    "solve_cross_cov",
    "MechanismKind",
    "PrivacyBudget",
    "empirical_privacy_check",
    "intrinsic_threshold",
    "plan_mechanism",
    "sensitivity_profile",
    "fuse",
    "fused_covariance",
    "fusion_weights",
    "perturbed_stacked_cov",
    "build_oxygen_scenario",
    "build_tracking_scenario",
    "calibrate",
    "rmse_summary",
    "run_monte_carlo",
]
