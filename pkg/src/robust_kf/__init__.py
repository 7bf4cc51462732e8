"""Outlier-robust cubature Kalman filtering for correlated measurements."""

from .costs import RobustCost, psi, rho
from .filters import (
    FilterStepError,
    GaussianBelief,
    RobustUpdateConfig,
    Strategy,
    UpdateDiagnostics,
    ckf_predict,
    ckf_update,
    filter_run,
    nmfe,
    reweight_joint,
    reweight_separate,
    robust_update,
    separate_errors,
)
from .models import StateSpaceModel, build_benchmark_model, decompose_correlation
from .sim import OutlierSpec, ScenarioConfig, TrmseResult, run_monte_carlo, simulate_trajectory, trmse

__version__ = "0.1.0"

__all__ = [
    "FilterStepError",
    "GaussianBelief",
    "OutlierSpec",
    "RobustCost",
    "RobustUpdateConfig",
    "ScenarioConfig",
    "StateSpaceModel",
    "Strategy",
    "TrmseResult",
    "UpdateDiagnostics",
    "build_benchmark_model",
    "ckf_predict",
    "ckf_update",
    "decompose_correlation",
    "filter_run",
    "nmfe",
    "psi",
    "reweight_joint",
    "reweight_separate",
    "rho",
    "robust_update",
    "run_monte_carlo",
    "separate_errors",
    "simulate_trajectory",
    "trmse",
]
