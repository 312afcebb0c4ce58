"""Model containers and forward simulation.

The generating process couples M stations through a lag-one propagation
matrix B and censors everything below a dryness threshold u:

    x[t] = B @ p[t-1] + sigma[t] * eps[t]        eps[t] ~ iid N(0, I_M)
    p[t, m] = x[t, m]  if x[t, m] >= u  else  0

with the shared volatility driven log-linearly by atmospheric
covariates f[t] (an intercept plus one slope per covariate):

    log sigma[t] = c[0] + c[1:] @ f[t]

All stations share sigma[t] at each hour, which is what makes wet and
dry spells move together across a region: a high-volatility hour raises
every station's chance of crossing the threshold at once.
"""

import dataclasses
import math

import numpy as np
from numba import njit

from . import rng

# Exponent bound for log sigma.  exp(x) overflows double precision near
# 709, so anything past +-700 is treated as a parameter error rather
# than silently becoming inf or 0.
MAX_LOG_VOLATILITY = 700.0


class VolatilityOverflowError(ValueError):
    """Raised when |log sigma| exceeds MAX_LOG_VOLATILITY at some hour.

    Carries the offending exponent and, when known, the row index of
    the covariate panel that produced it.
    """

    def __init__(self, exponent, time_index=None):
        self.exponent = float(exponent)
        self.time_index = time_index
        where = "" if time_index is None else f" at covariate row {time_index}"
        super().__init__(
            f"log volatility {self.exponent:.6g}{where} exceeds the "
            f"representable bound {MAX_LOG_VOLATILITY:g}"
        )


def _frozen_array(value, dtype=np.float64):
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Full parameter set: propagation matrix, volatility coefficients,
    censoring threshold.

    contagion is the M x M matrix B (row m gives the weights with which
    station m's next value loads on the current values of all
    stations).  volatility_coefs is (c[0], ..., c[d]) with c[0] the
    intercept of log sigma and one slope per covariate.  threshold is
    the censoring level u >= 0; simulated values are either exactly 0
    or at least u.
    """

    contagion: np.ndarray
    volatility_coefs: np.ndarray
    threshold: float

    def __post_init__(self):
        contagion = _frozen_array(self.contagion)
        coefs = _frozen_array(self.volatility_coefs)
        if contagion.ndim != 2 or contagion.shape[0] != contagion.shape[1]:
            raise ValueError("contagion must be a square matrix")
        if contagion.shape[0] < 1:
            raise ValueError("contagion must have at least one station")
        if coefs.ndim != 1 or coefs.size < 1:
            raise ValueError(
                "volatility_coefs must be a vector with at least the intercept"
            )
        if not np.all(np.isfinite(contagion)):
            raise ValueError("contagion entries must be finite")
        if not np.all(np.isfinite(coefs)):
            raise ValueError("volatility_coefs entries must be finite")
        threshold = float(self.threshold)
        if not math.isfinite(threshold) or threshold < 0.0:
            raise ValueError("threshold must be finite and non-negative")
        object.__setattr__(self, "contagion", contagion)
        object.__setattr__(self, "volatility_coefs", coefs)
        object.__setattr__(self, "threshold", threshold)

    @property
    def n_stations(self):
        return self.contagion.shape[0]

    @property
    def n_covariates(self):
        return self.volatility_coefs.size - 1

    def with_threshold(self, threshold):
        """Copy of these parameters with a different censoring level."""
        return ModelParams(self.contagion, self.volatility_coefs, threshold)


def _check_times(times):
    times = np.array(times, dtype=np.int64)
    if times.ndim != 1:
        raise ValueError("times must be one-dimensional")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    times.setflags(write=False)
    return times


@dataclasses.dataclass(frozen=True)
class CovariatePanel:
    """Hourly covariate table: values is (T, d), times is T epoch
    seconds (strictly increasing), names labels the d columns."""

    values: np.ndarray
    times: np.ndarray
    names: tuple

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise ValueError("covariate values must be a (T, d) array")
        if not np.all(np.isfinite(values)):
            raise ValueError("covariate values must be finite")
        times = _check_times(self.times)
        if times.size != values.shape[0]:
            raise ValueError("times length must match the number of rows")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise ValueError("names length must match the number of columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "names", names)

    @property
    def n_hours(self):
        return self.values.shape[0]

    @property
    def n_covariates(self):
        return self.values.shape[1]

    def window(self, start, stop):
        """Sub-panel over rows [start, stop)."""
        return CovariatePanel(self.values[start:stop], self.times[start:stop], self.names)


@dataclasses.dataclass(frozen=True)
class PrecipPanel:
    """Hourly precipitation table: values is (T, M) with non-negative
    finite entries, times is T epoch seconds, stations labels the M
    columns."""

    values: np.ndarray
    times: np.ndarray
    stations: tuple

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 2:
            raise ValueError("precipitation values must be a (T, M) array")
        if not np.all(np.isfinite(values)):
            raise ValueError("precipitation values must be finite")
        if np.any(values < 0.0):
            raise ValueError("precipitation values must be non-negative")
        times = _check_times(self.times)
        if times.size != values.shape[0]:
            raise ValueError("times length must match the number of rows")
        stations = tuple(str(s) for s in self.stations)
        if len(stations) != values.shape[1]:
            raise ValueError("stations length must match the number of columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "stations", stations)

    @property
    def n_hours(self):
        return self.values.shape[0]

    @property
    def n_stations(self):
        return self.values.shape[1]

    def window(self, start, stop):
        """Sub-panel over rows [start, stop)."""
        return PrecipPanel(self.values[start:stop], self.times[start:stop], self.stations)

    def station_index(self, station):
        """Resolve a station given as a label or an integer index."""
        if isinstance(station, str):
            try:
                return self.stations.index(station)
            except ValueError:
                raise KeyError(f"unknown station {station!r}") from None
        idx = int(station)
        if not 0 <= idx < self.n_stations:
            raise IndexError(f"station index {idx} out of range")
        return idx


@dataclasses.dataclass(frozen=True)
class SimulationConfig:
    """Simulation request: starting station values, number of hours to
    generate, and the seed for the noise stream."""

    initial_state: np.ndarray
    n_steps: int
    rng_seed: object = 0

    def __post_init__(self):
        state = _frozen_array(self.initial_state)
        if state.ndim != 1:
            raise ValueError("initial_state must be a vector")
        if not np.all(np.isfinite(state)):
            raise ValueError("initial_state must be finite")
        n_steps = int(self.n_steps)
        if n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        object.__setattr__(self, "initial_state", state)
        object.__setattr__(self, "n_steps", n_steps)


def log_volatilities(params, covariates):
    """Vector of log sigma over the rows of a covariate panel.

    Raises VolatilityOverflowError (with the offending row) if any
    exponent leaves [-MAX_LOG_VOLATILITY, MAX_LOG_VOLATILITY].
    """
    if covariates.n_covariates != params.n_covariates:
        raise ValueError(
            f"params expect {params.n_covariates} covariates, "
            f"panel has {covariates.n_covariates}"
        )
    coefs = params.volatility_coefs
    exponents = coefs[0] + covariates.values @ coefs[1:]
    bad = np.abs(exponents) > MAX_LOG_VOLATILITY
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise VolatilityOverflowError(exponents[idx], time_index=idx)
    return exponents


def volatility(params, covariate_row):
    """sigma for one hour given that hour's covariate vector."""
    row = np.asarray(covariate_row, dtype=np.float64)
    if row.shape != (params.n_covariates,):
        raise ValueError(
            f"covariate row must have shape ({params.n_covariates},), got {row.shape}"
        )
    coefs = params.volatility_coefs
    exponent = float(coefs[0] + row @ coefs[1:])
    if abs(exponent) > MAX_LOG_VOLATILITY:
        raise VolatilityOverflowError(exponent)
    return math.exp(exponent)


def step(params, prev_values, covariate_row, noise):
    """One transition: propagate, add scaled noise, censor.

    prev_values and noise are length-M vectors; returns the next
    station values (each entry exactly 0 or at least the threshold).
    """
    prev = np.asarray(prev_values, dtype=np.float64)
    eps = np.asarray(noise, dtype=np.float64)
    m = params.n_stations
    if prev.shape != (m,) or eps.shape != (m,):
        raise ValueError(f"prev_values and noise must have shape ({m},)")
    sigma = volatility(params, covariate_row)
    raw = params.contagion @ prev + sigma * eps
    return np.where(raw >= params.threshold, raw, 0.0)


@njit(cache=True)
def _simulate_core(contagion, sigmas, noise, initial_state, threshold):
    n_steps, m = noise.shape
    out = np.empty((n_steps, m))
    prev = initial_state.copy()
    for t in range(n_steps):
        for i in range(m):
            x = 0.0
            for j in range(m):
                x += contagion[i, j] * prev[j]
            x += sigmas[t] * noise[t, i]
            out[t, i] = x if x >= threshold else 0.0
        for i in range(m):
            prev[i] = out[t, i]
    return out


def simulate(params, covariates, config, stations=None):
    """Generate a precipitation panel along a covariate panel.

    The covariate panel must have exactly config.n_steps rows; row t
    sets the volatility for step t.  The initial state conditions step
    0 and is not part of the output.  Noise is drawn in one block of
    shape (n_steps, M) in C order from the stream for config.rng_seed,
    so output is reproducible bit for bit from (seed, params, panel).
    """
    if covariates.n_hours != config.n_steps:
        raise ValueError(
            f"covariate panel has {covariates.n_hours} rows, "
            f"config asks for {config.n_steps} steps"
        )
    m = params.n_stations
    state = config.initial_state
    if state.size != m:
        raise ValueError(f"initial_state must have length {m}")
    if np.any((state != 0.0) & (state < params.threshold)):
        raise ValueError(
            "initial_state entries must be 0 or at least the threshold"
        )
    sigmas = np.exp(log_volatilities(params, covariates))
    noise = rng.standard_normals(config.rng_seed, (config.n_steps, m))
    values = _simulate_core(
        params.contagion, sigmas, noise, state.astype(np.float64), params.threshold
    )
    if stations is None:
        stations = tuple(f"site{i + 1}" for i in range(m))
    return PrecipPanel(values=values, times=covariates.times, stations=stations)
