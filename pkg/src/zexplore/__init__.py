"""Exploratory repeated-measures analysis with z-similarity matrices."""

from .likelihood import Family, SchemaError, UnitObservations, log_kernel, mle, pooled_mle
from .zmatrix import (OrderSpec, ZDiagnostics, ZMatrix, compute_z, density_weights,
                      diagnostics, reorder, shrink_estimates, smooth_covariates)

__version__ = "0.1.0"

__all__ = [
    "Family", "SchemaError", "UnitObservations", "log_kernel", "mle", "pooled_mle",
    "OrderSpec", "ZDiagnostics", "ZMatrix", "compute_z", "density_weights",
    "diagnostics", "reorder", "shrink_estimates", "smooth_covariates",
]
