"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way, with
stdlib primitives (math.erfc, plain Python loops) instead of the
package's own special functions or vectorized kernels, so that
agreement between package and oracle actually checks two independent
routes to the same number.
"""

import math


def ref_normal_cdf(x):
    """Standard normal CDF through the C library's erfc."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def ref_normal_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def oracle_log_likelihood(contagion, vol_coefs, threshold, precip, covariates):
    """Direct transcription of the censored likelihood, term by term.

    contagion: list of M rows of M floats.  vol_coefs: intercept plus
    one slope per covariate.  precip: T rows of M floats.  covariates:
    T rows of d floats.  Hours t = 1..T-1 are scored conditional on
    t-1; a wet cell (value >= threshold) contributes the Gaussian
    density at its value, a dry cell (exactly 0) the log probability
    that the latent variable fell below the threshold, and a cell
    strictly between 0 and the threshold nothing at all.
    """
    n_hours = len(precip)
    m = len(contagion)
    total = 0.0
    for t in range(1, n_hours):
        log_sigma = vol_coefs[0]
        for j, f in enumerate(covariates[t]):
            log_sigma += vol_coefs[1 + j] * f
        sigma = math.exp(log_sigma)
        for i in range(m):
            mean = 0.0
            for j in range(m):
                mean += contagion[i][j] * precip[t - 1][j]
            value = precip[t][i]
            if value >= threshold:
                z = (value - mean) / sigma
                total += math.log(ref_normal_pdf(z) / sigma)
            elif value == 0.0:
                total += math.log(ref_normal_cdf((threshold - mean) / sigma))
            # cells in (0, threshold) carry no term
    return total


def brute_dry_spells(series):
    """Run lengths of zeros, collected with an index walk."""
    lengths = []
    i = 0
    n = len(series)
    while i < n:
        if series[i] == 0.0:
            j = i
            while j < n and series[j] == 0.0:
                j += 1
            lengths.append(j - i)
            i = j
        else:
            i += 1
    return sorted(lengths)


def brute_transitions(series, wet_threshold):
    """Wet-after-wet and wet-after-dry frequencies, counted one hour
    at a time.  Returns (p_ww, p_wd, n_wet, n_dry) with None where the
    conditioning state never occurs."""
    n_wet = n_dry = wet_wet = dry_wet = 0
    for t in range(len(series) - 1):
        now = series[t]
        nxt_wet = series[t + 1] >= wet_threshold
        if now >= wet_threshold:
            n_wet += 1
            if nxt_wet:
                wet_wet += 1
        elif now == 0.0:
            n_dry += 1
            if nxt_wet:
                dry_wet += 1
    p_ww = wet_wet / n_wet if n_wet else None
    p_wd = dry_wet / n_dry if n_dry else None
    return p_ww, p_wd, n_wet, n_dry


def brute_cross_corr(a, b, lag):
    """Pearson correlation of (a[t], b[t+lag]) pairs, plain loops."""
    if lag >= 0:
        pairs = [(a[t], b[t + lag]) for t in range(len(a) - lag)]
    else:
        pairs = [(a[t], b[t + lag]) for t in range(-lag, len(a))]
    n = len(pairs)
    if n < 2:
        return None
    mean_x = sum(p[0] for p in pairs) / n
    mean_y = sum(p[1] for p in pairs) / n
    sxx = sum((p[0] - mean_x) ** 2 for p in pairs)
    syy = sum((p[1] - mean_y) ** 2 for p in pairs)
    sxy = sum((p[0] - mean_x) * (p[1] - mean_y) for p in pairs)
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy / math.sqrt(sxx * syy)
