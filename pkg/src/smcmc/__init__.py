"""Sequential MCMC filtering with invertible particle flow and discrete
piecewise-deterministic refinement kernels."""

from .baselines import bootstrap_filter, kalman_filter
from .engine import FilterConfig, RunResult, compute_mse, run_filter
from .errors import (
    ConfigError,
    DegenerateEnsembleError,
    DomainError,
    FlowDegenerateError,
    FlowDivergedError,
    FlowError,
    InvalidGeometryError,
    ModelError,
    ReportError,
    SMCMCError,
)
from .flow import LambdaSchedule, edh_flow, lambda_schedule, ledh_flow_for_particle, t_function
from .kernels import KernelConfig, dbps_refine, dzz_refine
from .models import (
    DispersionParams,
    GHSkewedTPoissonModel,
    GridGeometry,
    LinearGaussianModel,
    build_spatial_covariance,
    log_bessel_k,
    simulate_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateEnsembleError", "DispersionParams", "DomainError", "FilterConfig",
    "FlowDegenerateError", "FlowDivergedError", "FlowError", "GHSkewedTPoissonModel", "GridGeometry",
    "InvalidGeometryError", "KernelConfig", "LambdaSchedule", "LinearGaussianModel", "ModelError",
    "ReportError", "RunResult", "SMCMCError", "bootstrap_filter", "build_spatial_covariance",
    "compute_mse", "dbps_refine", "dzz_refine", "edh_flow", "kalman_filter", "lambda_schedule",
    "ledh_flow_for_particle", "log_bessel_k", "run_filter", "simulate_trajectory", "t_function",
]
