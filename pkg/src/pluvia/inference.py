"""Maximum-likelihood fitting and the inference built on top of it.

The censored likelihood is smooth in the parameters but its gradient
has no closed form worth maintaining, so the maximizer is
derivative-free Nelder-Mead (the adaptive variant, which scales its
expansion and contraction coefficients with dimension) with a restart
from the incumbent, followed by an L-BFGS-B polish driven by central
finite differences.  Convergence is declared only when the final
simplex has collapsed and the finite-difference gradient is small, so
a "converged" fit means a genuine stationary point rather than a tired
optimizer.

Confidence intervals come from the profile likelihood: the interval
for one coordinate collects the values whose profile deviance
2 * (max logL - profiled logL) stays below the chi-square(1) quantile
of the requested level.  Each profiled point re-maximizes over the
remaining coordinates, warm-started from the neighbouring solution,
and the deviance boundary is located by doubling steps outward from
the estimate followed by bisection.

Threshold calibration picks the censoring level iteratively: fit at
the current level, then simulate panels at each candidate level with
the fitted dynamics and keep the candidate whose mean dry-spell length
best matches the data, until the choice reproduces itself.
"""

import dataclasses
import math

import numpy as np
from scipy.optimize import minimize

from . import rng
from .diagnostics import dry_spell_lengths
from .likelihood import (
    LikelihoodContext,
    log_likelihood,
    pack_params,
    param_names,
    unpack_params,
)
from .model import (
    ModelParams,
    SimulationConfig,
    VolatilityOverflowError,
    simulate,
)
from .special import chi2_quantile_1df

# Seed stream tags; combined with replica indices they form the spawn
# keys documented in the rng module.
STREAM_COVERAGE = 3
STREAM_CALIBRATION = 4

DEFAULT_THRESHOLD_GRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


@dataclasses.dataclass(frozen=True)
class FitOptions:
    """Optimizer budget and tolerances.

    max_evals caps likelihood evaluations across everything (direct
    search, restarts, polish, final checks).  diam_tol and grad_tol
    define convergence: final simplex diameter below diam_tol and
    finite-difference gradient infinity-norm below grad_tol.
    """

    max_evals: int = 60_000
    xatol: float = 1e-6
    fatol: float = 1e-9
    restarts: int = 1
    polish: bool = True
    grad_step: float = 1e-5
    grad_tol: float = 1e-3
    diam_tol: float = 1e-6


@dataclasses.dataclass(frozen=True)
class FitResult:
    """Outcome of fit_ml.

    max_loglik is the log-likelihood at estimates (re-evaluated at the
    returned point, so the two always agree).  trace records
    (evaluation count, best log-likelihood so far) at each improvement
    and is nondecreasing in its second component.
    """

    estimates: ModelParams
    max_loglik: float
    n_obs_used: int
    converged: bool
    n_evals: int
    trace: tuple
    simplex_diameter: float
    grad_norm: float


@dataclasses.dataclass(frozen=True)
class ProfileInterval:
    """Profile-likelihood interval for one packed parameter.

    lower_open / upper_open flag sides where the deviance never crossed
    the cutoff within the search range, in which case the reported
    endpoint is the last value probed rather than a crossing.
    """

    param_index: int
    param_name: str
    level: float
    estimate: float
    lower: float
    upper: float
    lower_open: bool = False
    upper_open: bool = False


@dataclasses.dataclass(frozen=True)
class CoverageResult:
    """Monte-Carlo coverage of profile intervals under known truth."""

    level: float
    n_replicas: int
    n_failures: int
    param_indices: tuple
    coverage: np.ndarray
    hit_counts: np.ndarray


@dataclasses.dataclass(frozen=True)
class CalibrationStep:
    """One calibration sweep: level fitted at, level selected by the
    dry-spell match, and the selected level's absolute gap."""

    fitted_at: float
    selected: float
    gap: float


@dataclasses.dataclass(frozen=True)
class ThresholdCalibration:
    """Outcome of calibrate_threshold.  converged means the selection
    reproduced the level it was fitted at; a cycle or an exhausted
    iteration budget leaves it False with the best-matching level."""

    candidates: tuple
    chosen: float
    steps: tuple
    converged: bool


class _CountedObjective:
    """Negated likelihood with evaluation accounting and best tracking."""

    def __init__(self, context, n_stations, n_covariates, threshold, max_evals):
        self._context = context
        self._shape = (n_stations, n_covariates, threshold)
        self.max_evals = max_evals
        self.n_evals = 0
        self.best_value = -math.inf
        self.best_vector = None
        self.trace = []

    def exhausted(self):
        return self.n_evals >= self.max_evals

    def remaining(self):
        return max(self.max_evals - self.n_evals, 0)

    def loglik(self, vector):
        m, d, u = self._shape
        self.n_evals += 1
        try:
            value = log_likelihood(unpack_params(vector, m, d, u), self._context)
        except VolatilityOverflowError:
            value = -math.inf
        if math.isnan(value):
            value = -math.inf
        if value > self.best_value:
            self.best_value = value
            self.best_vector = np.array(vector, dtype=np.float64)
            self.trace.append((self.n_evals, value))
        return value

    def neg(self, vector):
        return -self.loglik(vector)

    def fd_grad_neg(self, vector, step_scale):
        """Central-difference gradient of the negated objective; nan
        entries mark probes where the likelihood was not finite."""
        grad = np.empty(vector.size)
        for i in range(vector.size):
            h = step_scale * (1.0 + abs(vector[i]))
            probe = vector.copy()
            probe[i] = vector[i] + h
            hi = self.neg(probe)
            probe[i] = vector[i] - h
            lo = self.neg(probe)
            grad[i] = (hi - lo) / (2.0 * h) if math.isfinite(hi - lo) else math.nan
        return grad


def initial_params(context):
    """Least-squares starting point for the optimizer.

    The propagation matrix comes from per-station least squares of the
    wet responses on the previous hour's values; the volatility
    coefficients from regressing the log absolute residuals of those
    fits on the covariates.  Degenerate designs (too few wet hours)
    fall back to zeros, which always has finite likelihood.
    """
    values = context.precip.values
    covs = context.covariates.values
    u = context.threshold
    n_hours, m = values.shape
    contagion = np.zeros((m, m))
    resid_rows = []
    resid_logs = []
    for station in range(m):
        wet = values[1:, station] >= u
        if np.count_nonzero(wet) >= m + 1:
            x = values[:-1][wet]
            y = values[1:, station][wet]
            coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
            if rank == m and np.all(np.isfinite(coef)):
                contagion[station] = coef
                resid = y - x @ coef
                keep = np.abs(resid) > 0.0
                resid_logs.append(np.log(np.abs(resid[keep])))
                resid_rows.append(covs[1:][wet][keep])
    d = context.n_covariates
    coefs = np.zeros(d + 1)
    if resid_logs:
        log_r = np.concatenate(resid_logs)
        design = np.column_stack(
            [np.ones(log_r.size), np.concatenate(resid_rows, axis=0)]
        )
        if log_r.size >= d + 2:
            sol, _, rank, _ = np.linalg.lstsq(design, log_r, rcond=None)
            if rank == d + 1 and np.all(np.isfinite(sol)):
                coefs = sol
    return ModelParams(contagion=contagion, volatility_coefs=coefs, threshold=u)


def _simplex_diameter(simplex, best):
    return float(max(np.max(np.abs(vertex - best)) for vertex in simplex))


def fit_ml(context, init=None, options=None):
    """Maximize the censored log-likelihood over the panel.

    init defaults to initial_params(context); if its likelihood is not
    finite the zero-parameter fallback is used instead.  The returned
    FitResult has converged False when the evaluation budget ran out
    or the stationarity checks failed; the estimates are still the
    best point seen.
    """
    options = options or FitOptions()
    m, d, u = context.n_stations, context.n_covariates, context.threshold
    objective = _CountedObjective(context, m, d, u, options.max_evals)

    if init is None:
        init = initial_params(context)
    start = pack_params(init)
    if not math.isfinite(objective.loglik(start)):
        fallback = ModelParams(
            contagion=np.zeros((m, m)),
            volatility_coefs=np.zeros(d + 1),
            threshold=u,
        )
        start = pack_params(fallback)
        if not math.isfinite(objective.loglik(start)):
            raise ValueError("no finite starting point for the optimizer")
        init = fallback

    polish_reserve = min(3000, options.max_evals // 5) if options.polish else 0
    # the closing gradient check always runs; keep room for it
    diag_cost = 2 * start.size
    n_runs = options.restarts + 1
    simplex_diameter = math.inf
    for run in range(n_runs):
        budget = (
            objective.remaining()
            - diag_cost
            - polish_reserve * (run == n_runs - 1)
        )
        if budget < 10:
            break
        per_run = max(budget // (n_runs - run), 10)
        result = minimize(
            objective.neg,
            objective.best_vector,
            method="Nelder-Mead",
            options={
                "xatol": options.xatol,
                "fatol": options.fatol,
                "maxfev": per_run,
                "adaptive": True,
            },
        )
        simplex_diameter = _simplex_diameter(
            result.final_simplex[0], objective.best_vector
        )

    nm_best = objective.best_vector.copy()
    # each L-BFGS-B call costs one plain evaluation plus a 2n-point
    # finite-difference jacobian, so translate the remaining budget
    # into whole iterations to keep the accounting honest
    cycle_cost = 1 + 2 * nm_best.size
    polish_iters = (objective.remaining() - diag_cost - cycle_cost) // cycle_cost
    if options.polish and polish_iters >= 2:
        grad0 = objective.fd_grad_neg(nm_best, options.grad_step)
        if np.all(np.isfinite(grad0)):
            try:
                minimize(
                    objective.neg,
                    nm_best,
                    method="L-BFGS-B",
                    jac=lambda v: objective.fd_grad_neg(v, options.grad_step),
                    # the default ftol is relative to |f|, which for long
                    # records is tens of thousands; that would stop the
                    # polish while the gradient is still above grad_tol
                    options={
                        "maxfun": polish_iters,
                        "ftol": 1e-14,
                        "gtol": 0.1 * options.grad_tol,
                    },
                )
            except (ValueError, FloatingPointError):
                pass
    final = objective.best_vector
    simplex_diameter = max(
        simplex_diameter, float(np.max(np.abs(final - nm_best)))
    )

    grad = objective.fd_grad_neg(final, options.grad_step)
    grad_norm = float(np.max(np.abs(grad))) if np.all(np.isfinite(grad)) else math.inf
    estimates = unpack_params(final, m, d, u)
    max_loglik = log_likelihood(estimates, context)
    converged = (
        simplex_diameter < options.diam_tol
        and grad_norm < options.grad_tol
        and not objective.exhausted()
    )
    return FitResult(
        estimates=estimates,
        max_loglik=max_loglik,
        n_obs_used=context.n_obs_used,
        converged=converged,
        n_evals=objective.n_evals,
        trace=tuple(objective.trace),
        simplex_diameter=simplex_diameter,
        grad_norm=grad_norm,
    )


@dataclasses.dataclass(frozen=True)
class ProfileOptions:
    """Budget for each profiled point's reduced maximization and for
    the boundary search.

    simplex_scale sizes the initial simplex around the warm start;
    profiled points sit close to their neighbour's solution, so a
    small simplex skips most of the contraction work a default-sized
    one would spend."""

    point_max_evals: int = 3000
    xatol: float = 1e-4
    fatol: float = 1e-7
    simplex_scale: float = 5e-3
    max_doublings: int = 14
    boundary_tol: float = 1e-3


class _ProfileCurve:
    """Profiled log-likelihood along one packed coordinate, with warm
    starts carried between evaluations."""

    def __init__(self, context, fit, param_index, options):
        m, d, u = context.n_stations, context.n_covariates, context.threshold
        self._shape = (m, d, u)
        self._context = context
        self._index = param_index
        self._options = options
        full = pack_params(fit.estimates)
        self._free_idx = np.array(
            [i for i in range(full.size) if i != param_index]
        )
        self._warm = full[self._free_idx]
        self.n_evals = 0

    def _embed(self, fixed_value, free):
        full = np.empty(free.size + 1)
        full[self._index] = fixed_value
        full[self._free_idx] = free
        return full

    def value(self, fixed_value, warm=None):
        """Max log-likelihood with the coordinate pinned; also returns
        the maximizing free vector for reuse as a later warm start."""
        m, d, u = self._shape
        start = self._warm if warm is None else warm

        def reduced_neg(free):
            self.n_evals += 1
            try:
                value = log_likelihood(
                    unpack_params(self._embed(fixed_value, free), m, d, u),
                    self._context,
                )
            except VolatilityOverflowError:
                value = -math.inf
            return -value if not math.isnan(value) else math.inf

        scale = self._options.simplex_scale
        simplex = np.tile(start, (start.size + 1, 1))
        for i in range(start.size):
            simplex[i + 1, i] += scale * (1.0 + abs(start[i]))
        result = minimize(
            reduced_neg,
            start,
            method="Nelder-Mead",
            options={
                "xatol": self._options.xatol,
                "fatol": self._options.fatol,
                "maxfev": self._options.point_max_evals,
                "adaptive": True,
                "initial_simplex": simplex,
            },
        )
        self._warm = result.x
        return -result.fun, result.x


def profile_interval(context, fit, param_index, level=0.95, options=None):
    """Profile-likelihood confidence interval for one packed parameter.

    Requires a converged fit, since the deviance is measured from its
    maximum.  The boundary on each side is bracketed by doubling steps
    from the estimate and then bisected to options.boundary_tol; a side
    that never crosses within max_doublings comes back flagged open.
    """
    if not fit.converged:
        raise ValueError("profile intervals need a converged fit")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be strictly between 0 and 1")
    options = options or ProfileOptions()
    full = pack_params(fit.estimates)
    if not 0 <= param_index < full.size:
        raise IndexError(f"param_index {param_index} out of range")
    cutoff = chi2_quantile_1df(level)
    curve = _ProfileCurve(context, fit, param_index, options)
    estimate = float(full[param_index])
    l_max = fit.max_loglik

    def deviance(value, warm=None):
        prof, free = curve.value(value, warm)
        return max(2.0 * (l_max - prof), 0.0), free

    # Curvature probe sets the initial step so the first doubling lands
    # near the right scale for both narrow and wide intervals.
    h = 1e-3 * (1.0 + abs(estimate))
    q_probe, _ = deviance(estimate + h)
    if q_probe > 1e-12:
        step0 = h * math.sqrt(cutoff / q_probe)
    else:
        step0 = 0.25 * (1.0 + abs(estimate))
    step0 = min(max(step0, 1e-4), 2.0 * (1.0 + abs(estimate)))

    bounds = {}
    open_side = {}
    for direction in (-1.0, 1.0):
        inside_val, q_in = estimate, 0.0
        inside_free = None
        crossing = None
        step = step0
        for _ in range(options.max_doublings):
            candidate = estimate + direction * step
            q, free = deviance(candidate, inside_free)
            if q >= cutoff:
                crossing, q_out = candidate, q
                break
            inside_val, q_in, inside_free = candidate, q, free
            step *= 2.0
        if crossing is None:
            bounds[direction] = inside_val
            open_side[direction] = True
            continue
        # Deviance minus cutoff changes sign over [inside, crossing].
        # False position with the Illinois anti-stagnation halving
        # finds the crossing in a handful of evaluations; any
        # degenerate proposal falls back to a plain bisection step.
        lo, hi = inside_val, crossing
        f_lo = q_in - cutoff
        f_hi = min(q_out - cutoff, 1e6)
        last_side = 0
        while abs(hi - lo) > options.boundary_tol:
            denom = f_hi - f_lo
            mid = lo - f_lo * (hi - lo) / denom if denom != 0.0 else math.nan
            span = abs(hi - lo)
            if not (
                math.isfinite(mid)
                and min(lo, hi) < mid < max(lo, hi)
                and min(abs(mid - lo), abs(mid - hi)) > 0.01 * span
            ):
                mid = 0.5 * (lo + hi)
            q, free = deviance(mid, inside_free)
            if q >= cutoff:
                hi, f_hi = mid, min(q - cutoff, 1e6)
                if last_side == 1:
                    f_lo *= 0.5
                last_side = 1
            else:
                lo, f_lo, inside_free = mid, q - cutoff, free
                if last_side == -1:
                    f_hi *= 0.5
                last_side = -1
        bounds[direction] = 0.5 * (lo + hi)
        open_side[direction] = False

    m, d = context.n_stations, context.n_covariates
    return ProfileInterval(
        param_index=param_index,
        param_name=param_names(m, d)[param_index],
        level=level,
        estimate=estimate,
        lower=float(bounds[-1.0]),
        upper=float(bounds[1.0]),
        lower_open=open_side[-1.0],
        upper_open=open_side[1.0],
    )


def coverage_probability(
    true_params,
    covariates,
    level=0.95,
    n_replicas=100,
    param_indices=None,
    master_seed=0,
    fit_options=None,
    profile_options=None,
):
    """Monte-Carlo coverage of the profile intervals.

    Simulates panels under true_params along the given covariates,
    refits each, builds intervals for the requested packed parameters
    (default: every propagation-matrix entry) and reports the fraction
    of successful replicas whose interval contains the truth.
    Replicas whose fit fails to converge are excluded and counted.
    """
    m, d = true_params.n_stations, true_params.n_covariates
    if param_indices is None:
        param_indices = tuple(range(m * m))
    param_indices = tuple(int(i) for i in param_indices)
    truth = pack_params(true_params)
    hits = np.zeros(len(param_indices), dtype=np.int64)
    n_failures = 0
    n_ok = 0
    for replica in range(n_replicas):
        seed = rng.seed_sequence(master_seed, (STREAM_COVERAGE, replica))
        panel = simulate(
            true_params,
            covariates,
            SimulationConfig(
                initial_state=np.zeros(m),
                n_steps=covariates.n_hours,
                rng_seed=seed,
            ),
        )
        context = LikelihoodContext(panel, covariates, true_params.threshold)
        try:
            fit = fit_ml(context, options=fit_options)
        except ValueError:
            n_failures += 1
            continue
        if not fit.converged:
            n_failures += 1
            continue
        n_ok += 1
        for k, index in enumerate(param_indices):
            interval = profile_interval(
                context, fit, index, level=level, options=profile_options
            )
            if interval.lower <= truth[index] <= interval.upper:
                hits[k] += 1
    if n_ok == 0:
        raise RuntimeError("all coverage replicas failed to fit")
    return CoverageResult(
        level=level,
        n_replicas=n_replicas,
        n_failures=n_failures,
        param_indices=param_indices,
        coverage=hits / n_ok,
        hit_counts=hits,
    )


def _mean_dry_spell(panel):
    """Mean dry-spell length per station, averaged over the stations
    that have at least one dry spell; None if no station has any."""
    means = []
    for station in range(panel.n_stations):
        lengths = dry_spell_lengths(panel, station)
        if lengths.size:
            means.append(float(np.mean(lengths)))
    if not means:
        return None
    return float(np.mean(means))


def calibrate_threshold(
    precip,
    covariates,
    candidates=DEFAULT_THRESHOLD_GRID,
    start=0.5,
    n_sims=20,
    max_iters=10,
    master_seed=0,
    fit_options=None,
):
    """Iterate fit / simulate / match to choose the censoring level.

    Each sweep fits at the current level, simulates n_sims panels per
    candidate level under the fitted dynamics, and selects the
    candidate whose mean dry-spell length across simulations is
    closest to the data's (ties going to the smaller level).  The loop
    stops when the selection reproduces itself (converged True), when
    it revisits an earlier level (a cycle: the cycling level with the
    smaller gap is returned, converged False), or when max_iters runs
    out (best-gap level so far, converged False).
    """
    candidates = tuple(float(c) for c in candidates)
    if not candidates or sorted(set(candidates)) != sorted(candidates):
        raise ValueError("candidates must be distinct")
    if start not in candidates:
        raise ValueError("starting level must be one of the candidates")
    observed = _mean_dry_spell(precip)
    if observed is None:
        raise ValueError("data has no dry spells; calibration target undefined")
    m = precip.n_stations
    current = float(start)
    visited = []
    best_gap = {}
    steps = []
    converged = False
    for sweep in range(max_iters):
        context = LikelihoodContext(precip, covariates, current)
        fit = fit_ml(context, options=fit_options)
        visited.append(current)
        gaps = []
        for cand_idx, candidate in enumerate(candidates):
            sim_params = fit.estimates.with_threshold(candidate)
            sim_means = []
            for r in range(n_sims):
                seed = rng.seed_sequence(
                    master_seed, (STREAM_CALIBRATION, sweep, cand_idx, r)
                )
                panel = simulate(
                    sim_params,
                    covariates,
                    SimulationConfig(
                        initial_state=np.zeros(m),
                        n_steps=covariates.n_hours,
                        rng_seed=seed,
                    ),
                )
                mean_len = _mean_dry_spell(panel)
                if mean_len is not None:
                    sim_means.append(mean_len)
            gap = abs(observed - np.mean(sim_means)) if sim_means else math.inf
            gaps.append(gap)
        order = min(range(len(candidates)), key=lambda i: (gaps[i], candidates[i]))
        selected = candidates[order]
        gap_selected = float(gaps[order])
        steps.append(CalibrationStep(current, selected, gap_selected))
        prev = best_gap.get(selected, math.inf)
        best_gap[selected] = min(prev, gap_selected)
        if selected == current:
            converged = True
            chosen = selected
            break
        if selected in visited:
            # Cycle between levels already fitted at; keep the member
            # with the better dry-spell match.
            cycle = (selected, current)
            chosen = min(cycle, key=lambda c: best_gap.get(c, math.inf))
            break
        current = selected
    else:
        chosen = min(best_gap, key=best_gap.get) if best_gap else current
    return ThresholdCalibration(
        candidates=candidates,
        chosen=float(chosen),
        steps=tuple(steps),
        converged=converged,
    )
