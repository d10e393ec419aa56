"""Reduced-rank noise covariance estimation for vector autoregressions."""
from .errors import VarCovError
from .rrcov import RRCovEstimate, SampleCov, fit_rr, sample_cov, select_rank
from .var import ConstraintSpec, VarModel, fit_iterative, fit_two_step

__version__ = "0.1.0"

__all__ = [
    "VarCovError",
    "RRCovEstimate",
    "SampleCov",
    "fit_rr",
    "sample_cov",
    "select_rank",
    "ConstraintSpec",
    "VarModel",
    "fit_iterative",
    "fit_two_step",
]
