"""Robust MM-estimation for multivariate linear regression."""

__version__ = "0.1.0"

from .calibration import are, calibrate, solve_c0, solve_c1
from .diagnostics import (asymptotic_covariance, breakdown_lower_bound,
                          hyperplane_max_count, influence_value, qq_data)
from .evaluation import Scenario, cross_validate, run_simulation
from .exceptions import (ContractError, DataError, DegenerateDataError,
                         DegenerateKernelError, MMRegError, NoSupportError,
                         RankDeficiencyError, SingularScatterError, UsageError)
from .initial import SCandidate, SConfig, s_estimate
from .linalg import Dataset
from .mm import FitResult, MMConfig, fit, mle_fit, mm_fit
from .rho import Bisquare, make_kernel
from .scale import m_scale, tau_scale

__all__ = [
    "Bisquare", "ContractError", "DataError", "Dataset", "DegenerateDataError",
    "DegenerateKernelError", "FitResult", "MMConfig", "MMRegError", "NoSupportError",
    "RankDeficiencyError", "SCandidate", "SConfig", "Scenario", "SingularScatterError",
    "UsageError", "are", "asymptotic_covariance", "breakdown_lower_bound", "calibrate",
    "cross_validate", "fit", "hyperplane_max_count", "influence_value", "m_scale",
    "make_kernel", "mle_fit", "mm_fit", "qq_data", "run_simulation", "s_estimate",
    "solve_c0", "solve_c1", "tau_scale",
]
