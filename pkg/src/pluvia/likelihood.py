"""Censored Gaussian log-likelihood of a precipitation panel.

Each hour t >= 1 contributes one term per station, conditional on the
previous hour.  With mean mu[t, m] = B[m] @ p[t-1], shared volatility
sigma[t] and threshold u:

* wet cell (p >= u): Gaussian density term
  -log sigma[t] - log sqrt(2 pi) - ((p - mu) / sigma)**2 / 2
* dry cell (p == 0): censoring mass term
  log Phi((u - mu[t, m]) / sigma[t])
* anything strictly between 0 and u cannot be produced by the model;
  those cells are masked out and contribute nothing.

The first row only conditions the second and is never scored.  The
censoring term uses log_normal_cdf directly, which stays finite for
arbitrarily deep tails; a -inf total is therefore a genuine "this
parameter point gives the data zero density" signal (for example a
value many hundreds of sigma from its mean), returned as a value
rather than raised, so optimizers can treat it as a rejected point.
"""

import dataclasses
import math

import numpy as np
from numba import njit

from .model import ModelParams, VolatilityOverflowError, log_volatilities
from .special import LOG_SQRT_TWO_PI, _log_normal_cdf_scalar


@dataclasses.dataclass(frozen=True)
class LikelihoodContext:
    """Data bundle the likelihood is evaluated against.

    Pairs an aligned precipitation and covariate panel with the
    censoring threshold, plus the mask of cells (strictly between 0
    and the threshold) that are excluded from scoring.  The mask may
    be supplied explicitly, but must then equal the one implied by the
    values and threshold; this keeps any preprocessing step honest.
    """

    precip: object
    covariates: object
    threshold: float
    mask: np.ndarray = None

    def __post_init__(self):
        precip = self.precip
        covariates = self.covariates
        if precip.n_hours != covariates.n_hours:
            raise ValueError(
                f"precipitation has {precip.n_hours} rows, "
                f"covariates have {covariates.n_hours}"
            )
        if precip.n_hours < 2:
            raise ValueError("need at least two hours to score transitions")
        if not np.array_equal(precip.times, covariates.times):
            raise ValueError("precipitation and covariate times differ")
        threshold = float(self.threshold)
        if not np.isfinite(threshold) or threshold < 0.0:
            raise ValueError("threshold must be finite and non-negative")
        implied = (precip.values > 0.0) & (precip.values < threshold)
        if self.mask is None:
            mask = implied
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != precip.values.shape:
                raise ValueError("mask shape must match the precipitation values")
            if not np.array_equal(mask, implied):
                raise ValueError(
                    "mask must flag exactly the cells strictly between 0 "
                    "and the threshold"
                )
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "threshold", threshold)
        object.__setattr__(self, "mask", mask)

    @property
    def n_hours(self):
        return self.precip.n_hours

    @property
    def n_stations(self):
        return self.precip.n_stations

    @property
    def n_covariates(self):
        return self.covariates.n_covariates

    @property
    def n_obs_used(self):
        """Number of scored cells: all cells after the first row except
        the masked ones."""
        return int(self.precip.values[1:].size - np.count_nonzero(self.mask[1:]))


@njit(cache=True)
def _loglik_core(values, mask, contagion, sigmas, log_sigmas, threshold):
    # Neumaier-compensated accumulation: plain summation noise grows
    # with the record length and would drown the finite-difference
    # gradient that certifies convergence on long records
    n_hours, m = values.shape
    total = 0.0
    carry = 0.0
    for t in range(1, n_hours):
        sigma = sigmas[t]
        log_sigma = log_sigmas[t]
        for i in range(m):
            if mask[t, i]:
                continue
            mu = 0.0
            for j in range(m):
                mu += contagion[i, j] * values[t - 1, j]
            v = values[t, i]
            if v >= threshold:
                z = (v - mu) / sigma
                term = -0.5 * z * z - log_sigma - LOG_SQRT_TWO_PI
            else:
                term = _log_normal_cdf_scalar((threshold - mu) / sigma)
            if not np.isfinite(term):
                # a nonfinite term decides the sum on its own (no term
                # can be +inf), and it would poison the compensation
                return total + carry + term
            fresh = total + term
            if abs(total) >= abs(term):
                carry += (total - fresh) + term
            else:
                carry += (term - fresh) + total
            total = fresh
    return total + carry


def _check_compatible(params, context):
    if not isinstance(params, ModelParams):
        raise TypeError("params must be a ModelParams")
    if params.n_stations != context.n_stations:
        raise ValueError(
            f"params expect {params.n_stations} stations, "
            f"data has {context.n_stations}"
        )
    if params.n_covariates != context.n_covariates:
        raise ValueError(
            f"params expect {params.n_covariates} covariates, "
            f"data has {context.n_covariates}"
        )
    if params.threshold != context.threshold:
        raise ValueError(
            f"params threshold {params.threshold!r} differs from "
            f"context threshold {context.threshold!r}"
        )


def log_likelihood(params, context):
    """Censored log-likelihood of the panel under params.

    Returns a float, possibly -inf for parameter points under which
    some observed cell has zero density.  Raises
    VolatilityOverflowError if log sigma leaves the representable
    range at any hour.
    """
    _check_compatible(params, context)
    log_sigmas = log_volatilities(params, context.covariates)
    sigmas = np.exp(log_sigmas)
    return float(
        _loglik_core(
            context.precip.values,
            context.mask,
            params.contagion,
            sigmas,
            log_sigmas,
            context.threshold,
        )
    )


def pack_params(params):
    """Flatten (contagion row-major, then volatility coefficients) into
    the optimization vector."""
    return np.concatenate([params.contagion.ravel(), params.volatility_coefs])


def unpack_params(vector, n_stations, n_covariates, threshold):
    """Inverse of pack_params for a given model shape."""
    vector = np.asarray(vector, dtype=np.float64)
    expected = n_stations * n_stations + n_covariates + 1
    if vector.shape != (expected,):
        raise ValueError(
            f"parameter vector must have length {expected}, got {vector.shape}"
        )
    contagion = vector[: n_stations * n_stations].reshape(n_stations, n_stations)
    coefs = vector[n_stations * n_stations :]
    return ModelParams(contagion=contagion, volatility_coefs=coefs, threshold=threshold)


def param_names(n_stations, n_covariates):
    """Flat parameter labels in pack_params order."""
    names = [
        f"contagion[{i},{j}]"
        for i in range(n_stations)
        for j in range(n_stations)
    ]
    names.extend(f"volatility[{k}]" for k in range(n_covariates + 1))
    return names


def grad_log_likelihood(params, context, step_scale=1e-5):
    """Central finite-difference gradient in pack_params order.

    Step for coordinate i is step_scale * (1 + |v[i]|).  Raises
    ValueError, naming the coordinate, if the likelihood is not finite
    at a probe point, since a one-sided or garbage gradient would send
    an optimizer in an arbitrary direction.
    """
    _check_compatible(params, context)
    center = pack_params(params)
    m, d, u = params.n_stations, params.n_covariates, params.threshold

    def probe_loglik(vector):
        try:
            return log_likelihood(unpack_params(vector, m, d, u), context)
        except VolatilityOverflowError:
            return math.nan

    grad = np.empty(center.size)
    for i in range(center.size):
        h = step_scale * (1.0 + abs(center[i]))
        probe = center.copy()
        probe[i] = center[i] + h
        hi = probe_loglik(probe)
        probe[i] = center[i] - h
        lo = probe_loglik(probe)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ValueError(
                f"likelihood not finite near parameter {i} "
                f"({param_names(m, d)[i]}); gradient undefined"
            )
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
