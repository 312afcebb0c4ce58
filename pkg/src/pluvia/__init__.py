"""Multi-site hourly precipitation generator with covariate-driven volatility.

The model couples stations through a lag-one linear propagation matrix,
drives the shared innovation volatility through a log-linear function of
atmospheric covariates, and censors everything below a dryness threshold
to zero.  The package provides simulation, censored-likelihood fitting,
profile-likelihood intervals, threshold calibration, validation
diagnostics, a parameter-recovery study harness, CSV/JSON input and
output, and a command line wrapping all of it.
"""

__version__ = "0.1.0"

from .model import (
    CovariatePanel,
    ModelParams,
    PrecipPanel,
    SimulationConfig,
    VolatilityOverflowError,
    simulate,
    step,
    volatility,
)
from .likelihood import LikelihoodContext, grad_log_likelihood, log_likelihood
from .inference import (
    FitOptions,
    FitResult,
    ProfileInterval,
    ThresholdCalibration,
    calibrate_threshold,
    coverage_probability,
    fit_ml,
    initial_params,
    profile_interval,
)

__all__ = [
    "CovariatePanel",
    "FitOptions",
    "FitResult",
    "LikelihoodContext",
    "ModelParams",
    "PrecipPanel",
    "ProfileInterval",
    "SimulationConfig",
    "ThresholdCalibration",
    "VolatilityOverflowError",
    "calibrate_threshold",
    "coverage_probability",
    "fit_ml",
    "grad_log_likelihood",
    "initial_params",
    "log_likelihood",
    "profile_interval",
    "simulate",
    "step",
    "volatility",
]
