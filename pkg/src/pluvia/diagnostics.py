"""Validation diagnostics for observed and simulated panels.

These are the statistics used to judge whether simulated weather
behaves like the data: dry-spell length distributions, wet/dry
transition probabilities, the probability of a wet hour following each
intensity class, lagged cross-correlations between stations, paired
quantile tables, forecast skill against a persistence baseline, and
Monte-Carlo envelopes of arbitrary panel statistics.

Conventions, used consistently everywhere below: an hour is dry when
its value is exactly 0 (the model produces exact zeros), and wet when
its value is at least the wet threshold (default 0.2, the smallest
amount a tipping-bucket gauge resolves).  Values strictly between 0
and the wet threshold occur in real data; they count as neither dry
nor wet.
"""

import dataclasses
import math

import numpy as np

from . import rng
from .model import SimulationConfig, log_volatilities, simulate
from .special import chi2_log10_sf, chi2_sf

DEFAULT_WET_THRESHOLD = 0.2
DEFAULT_BIN_EDGES = (0.2, 0.8, 1.4, 2.0, 4.0)

STREAM_FORECAST = 5
STREAM_ENVELOPE = 6
STREAM_REPORT = 7


def dry_spell_lengths(panel, station):
    """Lengths of maximal runs of consecutive dry hours, ascending.

    Runs touching either end of the record count like any other run.
    Returns an empty integer array when the station is never dry.
    """
    idx = panel.station_index(station)
    dry = np.concatenate(([0], (panel.values[:, idx] == 0.0).astype(np.int8), [0]))
    change = np.diff(dry)
    starts = np.flatnonzero(change == 1)
    ends = np.flatnonzero(change == -1)
    return np.sort(ends - starts)


@dataclasses.dataclass(frozen=True)
class TransitionProbs:
    """First-order wet/dry transition estimates for one station.

    A probability is None when its conditioning event never occurs in
    the record, which is different from being zero.
    """

    p_wet_given_wet: object
    p_wet_given_dry: object
    n_wet_origins: int
    n_dry_origins: int

    @property
    def p_dry_given_wet(self):
        if self.p_wet_given_wet is None:
            return None
        return 1.0 - self.p_wet_given_wet

    @property
    def p_dry_given_dry(self):
        if self.p_wet_given_dry is None:
            return None
        return 1.0 - self.p_wet_given_dry


def transition_probs(panel, station, wet_threshold=DEFAULT_WET_THRESHOLD):
    """Estimate P(wet next | wet now) and P(wet next | dry now).

    "Now" ranges over all hours except the last.  Origins that are
    neither dry nor wet (values in (0, wet_threshold)) are skipped.
    """
    if panel.n_hours < 2:
        raise ValueError("need at least two hours for transitions")
    idx = panel.station_index(station)
    values = panel.values[:, idx]
    now_wet = values[:-1] >= wet_threshold
    now_dry = values[:-1] == 0.0
    next_wet = values[1:] >= wet_threshold
    n_wet = int(np.count_nonzero(now_wet))
    n_dry = int(np.count_nonzero(now_dry))
    p_ww = float(np.count_nonzero(now_wet & next_wet) / n_wet) if n_wet else None
    p_wd = float(np.count_nonzero(now_dry & next_wet) / n_dry) if n_dry else None
    return TransitionProbs(
        p_wet_given_wet=p_ww,
        p_wet_given_dry=p_wd,
        n_wet_origins=n_wet,
        n_dry_origins=n_dry,
    )


@dataclasses.dataclass(frozen=True)
class OccurrenceByIntensity:
    """Wet-hour probability conditioned on the current intensity class,
    with a chi-square test of equal probability across classes.

    bins are (low, high] intervals, the last extending to infinity.
    Classes with no origin hours are dropped from the table and the
    test; their bounds are recorded in dropped_bins.  The test fields
    are None when fewer than two classes survive.
    """

    bins: tuple
    counts: np.ndarray
    occurrences: np.ndarray
    probs: np.ndarray
    dropped_bins: tuple
    chi2_stat: object
    dof: object
    p_value: object
    log10_p: object


def occurrence_given_intensity(
    panel,
    station,
    bin_edges=DEFAULT_BIN_EDGES,
    wet_threshold=DEFAULT_WET_THRESHOLD,
):
    """Table of P(next hour wet | current value in class).

    Classes are consecutive (low, high] intervals over bin_edges plus
    an unbounded last class.  The chi-square statistic tests
    homogeneity of the next-hour wet proportion across classes
    (degrees of freedom: classes minus one) against the pooled
    proportion; both the p-value and its log10 are reported, the
    latter staying informative when the p-value underflows.
    """
    edges = tuple(float(e) for e in bin_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin_edges must be strictly increasing with >= 2 entries")
    if panel.n_hours < 2:
        raise ValueError("need at least two hours")
    idx = panel.station_index(station)
    values = panel.values[:, idx]
    now = values[:-1]
    next_wet = values[1:] >= wet_threshold
    bins = [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]
    bins.append((edges[-1], math.inf))
    kept_bins = []
    counts = []
    occurrences = []
    dropped = []
    for low, high in bins:
        in_bin = (now > low) & (now <= high)
        n = int(np.count_nonzero(in_bin))
        if n == 0:
            dropped.append((low, high))
            continue
        kept_bins.append((low, high))
        counts.append(n)
        occurrences.append(int(np.count_nonzero(in_bin & next_wet)))
    counts = np.array(counts, dtype=np.int64)
    occurrences = np.array(occurrences, dtype=np.int64)
    probs = occurrences / counts if counts.size else np.empty(0)
    chi2_stat = dof = p_value = log10_p = None
    if counts.size >= 2:
        pooled = occurrences.sum() / counts.sum()
        if pooled in (0.0, 1.0):
            chi2_stat = 0.0
        else:
            expected_wet = counts * pooled
            expected_dry = counts * (1.0 - pooled)
            chi2_stat = float(
                np.sum((occurrences - expected_wet) ** 2 / expected_wet)
                + np.sum(((counts - occurrences) - expected_dry) ** 2 / expected_dry)
            )
        dof = counts.size - 1
        p_value = chi2_sf(chi2_stat, dof)
        log10_p = chi2_log10_sf(chi2_stat, dof) if chi2_stat > 0 else 0.0
    return OccurrenceByIntensity(
        bins=tuple(kept_bins),
        counts=counts,
        occurrences=occurrences,
        probs=probs,
        dropped_bins=tuple(dropped),
        chi2_stat=chi2_stat,
        dof=dof,
        p_value=p_value,
        log10_p=log10_p,
    )


def cross_correlation(panel, station_a, station_b, lags):
    """Lagged Pearson correlation between two stations.

    For lag L the pairs are (a at hour t, b at hour t+L) over every t
    where both exist, with means and variances computed on exactly that
    overlap; this makes corr(a, b, L) equal corr(b, a, -L) to the last
    bit.  Entries are NaN when either side of the overlap is constant
    or when fewer than two pairs overlap.
    """
    ia = panel.station_index(station_a)
    ib = panel.station_index(station_b)
    a = panel.values[:, ia]
    b = panel.values[:, ib]
    n = a.size
    out = np.empty(len(lags))
    for k, lag in enumerate(lags):
        lag = int(lag)
        if lag >= 0:
            x, y = a[: n - lag], b[lag:]
        else:
            x, y = a[-lag:], b[: n + lag]
        if x.size < 2:
            out[k] = math.nan
            continue
        xc = x - x.mean()
        yc = y - y.mean()
        denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
        out[k] = float(xc @ yc) / denom if denom > 0.0 else math.nan
    return out


@dataclasses.dataclass(frozen=True)
class QQTable:
    """Paired quantiles of two samples on a common probability grid."""

    probs: np.ndarray
    observed: np.ndarray
    simulated: np.ndarray


def qq_pairs(observed_values, simulated_values, probs=None):
    """Quantiles of both samples on one probability grid.

    Uses numpy's default "linear" interpolation (Hyndman-Fan type 7);
    plotting observed against simulated is the usual QQ comparison.
    """
    observed = np.asarray(observed_values, dtype=np.float64).ravel()
    simulated = np.asarray(simulated_values, dtype=np.float64).ravel()
    if observed.size == 0 or simulated.size == 0:
        raise ValueError("both samples must be non-empty")
    if probs is None:
        probs = np.linspace(0.01, 0.99, 99)
    probs = np.asarray(probs, dtype=np.float64)
    if np.any((probs <= 0.0) | (probs >= 1.0)):
        raise ValueError("probabilities must be strictly inside (0, 1)")
    return QQTable(
        probs=probs,
        observed=np.quantile(observed, probs, method="linear"),
        simulated=np.quantile(simulated, probs, method="linear"),
    )


@dataclasses.dataclass(frozen=True)
class ForecastOdds:
    """Wet/dry hit rates of ensemble forecasts against persistence.

    Accuracies are fractions of (origin, station) verdicts that match
    the record; by_station variants resolve them per station.
    """

    horizons: tuple
    wet_threshold: float
    n_paths: int
    n_origins: int
    model_accuracy: np.ndarray
    persistence_accuracy: np.ndarray
    model_by_station: np.ndarray
    persistence_by_station: np.ndarray


def forecast_odds(
    params,
    covariates,
    observed,
    horizons=(1, 2, 3, 6, 12, 24),
    n_paths=200,
    wet_threshold=DEFAULT_WET_THRESHOLD,
    origin_stride=1,
    master_seed=0,
):
    """Compare ensemble wet/dry forecasts with a persistence baseline.

    From every origin_stride-th hour, n_paths trajectories are rolled
    forward under params (volatilities taken from the covariate rows
    being forecast), starting from the observed station values at the
    origin.  At each horizon the forecast calls a station wet when at
    least half the paths are wet; persistence repeats the origin's
    wet/dry state.  Both are scored against the record at the target
    hour.

    The rollout starts from observed values as they are, including
    sub-threshold ones real gauges produce, since a forecast has to
    launch from whatever state was measured.
    """
    horizons = tuple(int(h) for h in horizons)
    if not horizons or any(h < 1 for h in horizons) or sorted(horizons) != list(
        horizons
    ):
        raise ValueError("horizons must be positive and ascending")
    if observed.n_hours != covariates.n_hours or not np.array_equal(
        observed.times, covariates.times
    ):
        raise ValueError("observed and covariate panels must be aligned")
    max_h = horizons[-1]
    n_hours, m = observed.values.shape
    if n_hours <= max_h:
        raise ValueError("record shorter than the longest horizon")
    sigmas = np.exp(log_volatilities(params, covariates))
    contagion_t = params.contagion.T
    origins = range(0, n_hours - max_h, int(origin_stride))
    n_h = len(horizons)
    model_hits = np.zeros((n_h, m), dtype=np.int64)
    persist_hits = np.zeros((n_h, m), dtype=np.int64)
    n_origins = 0
    horizon_of_step = {h: i for i, h in enumerate(horizons)}
    for t0 in origins:
        n_origins += 1
        seed = rng.seed_sequence(master_seed, (STREAM_FORECAST, t0))
        noise = rng.standard_normals(seed, (max_h, n_paths, m))
        state = np.broadcast_to(observed.values[t0], (n_paths, m)).copy()
        origin_wet = observed.values[t0] >= wet_threshold
        for step in range(1, max_h + 1):
            t = t0 + step
            raw = state @ contagion_t + sigmas[t] * noise[step - 1]
            state = np.where(raw >= params.threshold, raw, 0.0)
            row = horizon_of_step.get(step)
            if row is None:
                continue
            truth = observed.values[t] >= wet_threshold
            predicted = np.mean(state >= wet_threshold, axis=0) >= 0.5
            model_hits[row] += predicted == truth
            persist_hits[row] += origin_wet == truth
    return ForecastOdds(
        horizons=horizons,
        wet_threshold=wet_threshold,
        n_paths=int(n_paths),
        n_origins=n_origins,
        model_accuracy=model_hits.sum(axis=1) / (n_origins * m),
        persistence_accuracy=persist_hits.sum(axis=1) / (n_origins * m),
        model_by_station=model_hits / n_origins,
        persistence_by_station=persist_hits / n_origins,
    )


@dataclasses.dataclass(frozen=True)
class EnvelopeBand:
    """Pointwise quantile band of a panel statistic over simulations."""

    quantiles: tuple
    values: np.ndarray
    n_replicas: int


def envelope(
    statistic,
    params,
    covariates,
    n_replicas=100,
    quantiles=(0.01, 0.5, 0.99),
    initial_state=None,
    master_seed=0,
):
    """Simulation envelope of a statistic.

    statistic must be a pure function mapping a precipitation panel to
    a fixed-length 1-D array.  n_replicas panels are simulated under
    params along the covariates and the statistic's pointwise
    quantiles are returned, one band row per requested quantile
    (default: a 98% band plus the median).
    """
    quantiles = tuple(float(q) for q in quantiles)
    if any(not 0.0 <= q <= 1.0 for q in quantiles):
        raise ValueError("quantiles must lie in [0, 1]")
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    if initial_state is None:
        initial_state = np.zeros(params.n_stations)
    rows = []
    expected_shape = None
    for replica in range(n_replicas):
        seed = rng.seed_sequence(master_seed, (STREAM_ENVELOPE, replica))
        panel = simulate(
            params,
            covariates,
            SimulationConfig(
                initial_state=initial_state,
                n_steps=covariates.n_hours,
                rng_seed=seed,
            ),
        )
        value = np.asarray(statistic(panel), dtype=np.float64)
        if value.ndim != 1:
            raise ValueError("statistic must return a 1-D array")
        if expected_shape is None:
            expected_shape = value.shape
        elif value.shape != expected_shape:
            raise ValueError("statistic returned inconsistent lengths")
        rows.append(value)
    stacked = np.vstack(rows)
    return EnvelopeBand(
        quantiles=quantiles,
        values=np.quantile(stacked, quantiles, axis=0),
        n_replicas=int(n_replicas),
    )


@dataclasses.dataclass(frozen=True)
class DiagnosticsOptions:
    """Knobs for build_report."""

    wet_threshold: float = DEFAULT_WET_THRESHOLD
    bin_edges: tuple = DEFAULT_BIN_EDGES
    lags: tuple = (-6, -3, -1, 0, 1, 3, 6)
    qq_probs_count: int = 99
    n_sim_replicas: int = 20
    master_seed: int = 0


def _spell_summary(lengths):
    if lengths.size == 0:
        return {"count": 0, "mean": None, "max": None}
    return {
        "count": int(lengths.size),
        "mean": float(np.mean(lengths)),
        "max": int(lengths.max()),
    }


def build_report(params, precip, covariates, options=None):
    """Assemble the full diagnostics dictionary for a fitted model.

    Observed-side sections (spells, transitions, occurrence tables,
    cross-correlations) are computed from the panel as given.
    Simulation-side sections (per-station QQ tables against pooled
    simulated values, and envelopes of the station means and wet
    fractions) use n_sim_replicas seeded simulations under params.
    Returns a plain dict ready for JSON encoding.
    """
    options = options or DiagnosticsOptions()
    wet = options.wet_threshold
    stations = list(precip.stations)
    m = precip.n_stations

    report = {"stations": stations, "wet_threshold": wet, "per_station": {}}
    for station in stations:
        spells = dry_spell_lengths(precip, station)
        trans = transition_probs(precip, station, wet)
        occ = occurrence_given_intensity(precip, station, options.bin_edges, wet)
        report["per_station"][station] = {
            "dry_spells": _spell_summary(spells),
            "transitions": {
                "p_wet_given_wet": trans.p_wet_given_wet,
                "p_wet_given_dry": trans.p_wet_given_dry,
                "n_wet_origins": trans.n_wet_origins,
                "n_dry_origins": trans.n_dry_origins,
            },
            "occurrence_by_intensity": {
                "bins": [[lo, hi if math.isfinite(hi) else None] for lo, hi in occ.bins],
                "counts": occ.counts.tolist(),
                "probs": occ.probs.tolist(),
                "chi2_stat": occ.chi2_stat,
                "dof": occ.dof,
                "p_value": occ.p_value,
                "log10_p": occ.log10_p,
            },
        }

    lags = tuple(int(x) for x in options.lags)
    cross = []
    for ia in range(m):
        for ib in range(ia + 1, m):
            values = cross_correlation(precip, ia, ib, lags)
            cross.append(
                {
                    "pair": [stations[ia], stations[ib]],
                    "lags": list(lags),
                    "correlation": [
                        None if math.isnan(v) else float(v) for v in values
                    ],
                }
            )
    report["cross_correlation"] = cross

    sim_values = []
    for replica in range(options.n_sim_replicas):
        seed = rng.seed_sequence(options.master_seed, (STREAM_REPORT, replica))
        panel = simulate(
            params,
            covariates,
            SimulationConfig(
                initial_state=np.zeros(m),
                n_steps=covariates.n_hours,
                rng_seed=seed,
            ),
        )
        sim_values.append(panel.values)
    pooled = np.concatenate(sim_values, axis=0)
    probs = np.linspace(0.01, 0.99, options.qq_probs_count)
    report["qq"] = {}
    for idx, station in enumerate(stations):
        table = qq_pairs(precip.values[:, idx], pooled[:, idx], probs)
        report["qq"][station] = {
            "probs": table.probs.tolist(),
            "observed": table.observed.tolist(),
            "simulated": table.simulated.tolist(),
        }

    def station_means(panel):
        return panel.values.mean(axis=0)

    def wet_fraction(panel):
        return np.mean(panel.values >= wet, axis=0)

    bands = {}
    for name, stat, observed_value in (
        ("station_mean", station_means, precip.values.mean(axis=0)),
        ("wet_fraction", wet_fraction, np.mean(precip.values >= wet, axis=0)),
    ):
        band = envelope(
            stat,
            params,
            covariates,
            n_replicas=options.n_sim_replicas,
            master_seed=options.master_seed,
        )
        bands[name] = {
            "quantiles": list(band.quantiles),
            "band": band.values.tolist(),
            "observed": observed_value.tolist(),
        }
    report["envelopes"] = bands
    return report
