"""Radial basis function interpolation of error-estimator data.

The pairwise kernel evaluation runs on a compiled Cython core when the
extension built; otherwise a numpy fallback is used (``BACKEND`` reports
which one is active).
"""

from .interpolate import (
    BACKEND,
    CoincidentCentersError,
    IllConditionedKernelError,
    KernelKind,
    NoShapeParameterError,
    Surrogate,
    default_sigma_bounds,
    evaluate,
    fit,
    fit_log,
    kernel_eval,
    kernel_matrix,
    loocv_errors_naive,
    loocv_errors_rippa,
    loocv_select_shape,
)

__all__ = [
    "BACKEND",
    "CoincidentCentersError",
    "IllConditionedKernelError",
    "KernelKind",
    "NoShapeParameterError",
    "Surrogate",
    "default_sigma_bounds",
    "evaluate",
    "fit",
    "fit_log",
    "kernel_eval",
    "kernel_matrix",
    "loocv_errors_naive",
    "loocv_errors_rippa",
    "loocv_select_shape",
]
