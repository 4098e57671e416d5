"""Exact and Monte Carlo tools for random walks conditioned to stay positive."""

__version__ = "0.1.0"

from .stable import DomainError, QuadratureError, StableParams, stable_cf, stable_density, rho_from  # noqa: E402
from .steps import StepModel, get_model, load_model_file, norm_seq  # noqa: E402

__all__ = [
    "DomainError",
    "QuadratureError",
    "StableParams",
    "StepModel",
    "get_model",
    "load_model_file",
    "norm_seq",
    "rho_from",
    "stable_cf",
    "stable_density",
]
