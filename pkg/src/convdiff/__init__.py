"""Diffusions observed through a uniform time-convolution kernel.

Simulation, smoothing-parameter estimation, the test of ``rho = 0`` and
least-square quasi-likelihood fitting.
"""

from ._backend import BACKEND
from .conv_obs import ConvolvedSeries, convolve, read_series_csv, subsample
from .errors import (ConfigurationError, ConvDiffError, DataError, DegenerateStatisticError,
                     DomainError, InsufficientDataError, OptimizationError, RangeError,
                     SimulationError)
from .inference import (FitResult, ParamEstimate, RhoEstimate, TestReport, bounded_optimize,
                        estimate_rho, fit, lga_estimate, lse_alpha, lse_beta, smoothing_test)
from .kernel_math import (PiecewiseValue, SmoothingBound, f_D0, f_G, gaussian_cdf,
                          gaussian_quantile, ratio_R, ratio_R_inverse, reduced_qv_limit)
from .sde_sim import ModelSpec, SamplePath, SimConfig, euler_maruyama, ou_1d, ou_2d
from .variation_stats import VariationSummary, ratio_Rn, rv_curve, variations

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigurationError", "ConvDiffError", "ConvolvedSeries", "DataError",
    "DegenerateStatisticError", "DomainError", "FitResult", "InsufficientDataError", "ModelSpec",
    "OptimizationError", "ParamEstimate", "PiecewiseValue", "RangeError", "RhoEstimate",
    "SamplePath", "SimConfig", "SimulationError", "SmoothingBound", "TestReport",
    "VariationSummary", "bounded_optimize", "convolve", "estimate_rho", "euler_maruyama", "f_D0",
    "f_G", "fit", "gaussian_cdf", "gaussian_quantile", "lga_estimate", "lse_alpha", "lse_beta",
    "ou_1d", "ou_2d", "ratio_R", "ratio_R_inverse", "ratio_Rn", "read_series_csv",
    "reduced_qv_limit", "rv_curve", "smoothing_test", "subsample", "variations",
]
