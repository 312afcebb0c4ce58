import math

import numpy as np
import pytest

from conftest import make_tiny_instance
from helpers import oracle_log_likelihood
from pluvia.likelihood import (
    LikelihoodContext,
    grad_log_likelihood,
    log_likelihood,
    pack_params,
    param_names,
    unpack_params,
)
from pluvia.model import CovariatePanel, ModelParams, PrecipPanel


def build_context(values, cov_values, threshold):
    n_hours = values.shape[0]
    times = 3600 * np.arange(n_hours, dtype=np.int64)
    precip = PrecipPanel(
        values=values,
        times=times,
        stations=tuple(f"s{i}" for i in range(values.shape[1])),
    )
    covariates = CovariatePanel(
        values=cov_values,
        times=times,
        names=tuple(f"c{i}" for i in range(cov_values.shape[1])),
    )
    return LikelihoodContext(precip, covariates, threshold)


def test_matches_term_by_term_oracle():
    # Fifty random tiny models against the plain-Python transcription;
    # cells of every kind (wet, dry, masked) occur across instances.
    generator = np.random.default_rng(20240817)
    for _ in range(50):
        params, values, covs = make_tiny_instance(generator)
        context = build_context(values, covs, params.threshold)
        ours = log_likelihood(params, context)
        reference = oracle_log_likelihood(
            params.contagion.tolist(),
            params.volatility_coefs.tolist(),
            params.threshold,
            values.tolist(),
            covs.tolist(),
        )
        assert ours == pytest.approx(reference, abs=1e-9)


def test_first_row_not_scored():
    values = np.array([[0.35], [0.9]])
    covs = np.zeros((2, 1))
    params = ModelParams(np.array([[0.4]]), np.array([0.0, 0.0]), 0.7)
    context = build_context(values, covs, 0.7)
    # first row holds a masked value (0 < 0.35 < 0.7); only the second
    # row produces a term, conditioned on 0.35
    assert context.n_obs_used == 1
    z = 0.9 - 0.4 * 0.35
    expected = -0.5 * z * z - math.log(math.sqrt(2 * math.pi))
    assert log_likelihood(params, context) == pytest.approx(expected, abs=1e-12)


def test_masked_cells_carry_no_term():
    generator = np.random.default_rng(7)
    params, values, covs = make_tiny_instance(generator)
    masked = (values > 0) & (values < params.threshold)
    if not masked.any():
        values[1, 0] = params.threshold * 0.5
        masked = (values > 0) & (values < params.threshold)
    context = build_context(values, covs, params.threshold)
    base = log_likelihood(params, context)
    # moving a masked value inside (0, u) must not change anything
    # except through its role as the next hour's regressor; pick a
    # masked cell in the last row, which conditions nothing
    values2 = values.copy()
    last_masked = np.argwhere(masked)
    row, col = last_masked[-1]
    if row == values.shape[0] - 1:
        values2[row, col] = params.threshold * 0.25
        context2 = build_context(values2, covs, params.threshold)
        assert log_likelihood(params, context2) == pytest.approx(base, abs=1e-12)


def test_mask_mismatch_rejected():
    values = np.array([[0.0], [0.9]])
    covs = np.zeros((2, 1))
    n = values.shape[0]
    times = 3600 * np.arange(n, dtype=np.int64)
    precip = PrecipPanel(values=values, times=times, stations=("s0",))
    covariates = CovariatePanel(values=covs, times=times, names=("c0",))
    good = np.zeros((2, 1), dtype=bool)
    LikelihoodContext(precip, covariates, 0.7, mask=good)  # fine
    with pytest.raises(ValueError):
        LikelihoodContext(precip, covariates, 0.7, mask=~good)


def test_context_alignment_checks():
    values = np.array([[0.0], [0.9], [0.0]])
    covs = np.zeros((2, 1))
    with pytest.raises(ValueError):
        build_context(values, covs, 0.7)
    with pytest.raises(ValueError):
        build_context(values[:1], covs[:1], 0.7)  # fewer than two hours


def test_threshold_mismatch_between_params_and_context():
    values = np.array([[0.0], [0.9]])
    covs = np.zeros((2, 1))
    params = ModelParams(np.array([[0.4]]), np.array([0.0, 0.0]), 0.5)
    context = build_context(values, covs, 0.7)
    with pytest.raises(ValueError):
        log_likelihood(params, context)


def test_station_count_mismatch():
    values = np.array([[0.0, 0.0], [0.9, 0.0]])
    covs = np.zeros((2, 1))
    params = ModelParams(np.array([[0.4]]), np.array([0.0, 0.0]), 0.7)
    context = build_context(values, covs, 0.7)
    with pytest.raises(ValueError):
        log_likelihood(params, context)


def test_zero_density_point_returns_minus_inf():
    # an observed wet value astronomically far from its mean under a
    # tiny volatility: the density underflows and the sentinel comes
    # back as a value, not an exception
    values = np.array([[1e30], [1e300]])
    covs = np.zeros((2, 1))
    params = ModelParams(np.array([[0.0]]), np.array([-600.0, 0.0]), 0.7)
    context = build_context(values, covs, 0.7)
    assert log_likelihood(params, context) == -math.inf


def test_n_obs_used_counts_scored_cells():
    values = np.array([[0.0, 0.9], [0.3, 0.9], [0.0, 0.1]])
    covs = np.zeros((3, 1))
    context = build_context(values, covs, 0.7)
    # rows 1 and 2 scored: row1 has one masked cell (0.3), row2 one
    # masked cell (0.1); 4 cells minus 2 masked
    assert context.n_obs_used == 2


def test_pack_unpack_roundtrip():
    params = ModelParams(
        np.array([[0.1, 0.2], [0.3, 0.4]]), np.array([0.5, 0.6]), 0.7
    )
    vector = pack_params(params)
    np.testing.assert_array_equal(vector, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    back = unpack_params(vector, 2, 1, 0.7)
    np.testing.assert_array_equal(back.contagion, params.contagion)
    np.testing.assert_array_equal(back.volatility_coefs, params.volatility_coefs)
    with pytest.raises(ValueError):
        unpack_params(vector[:-1], 2, 1, 0.7)


def test_param_names_order():
    names = param_names(2, 1)
    assert names == [
        "contagion[0,0]",
        "contagion[0,1]",
        "contagion[1,0]",
        "contagion[1,1]",
        "volatility[0]",
        "volatility[1]",
    ]


class TestGradient:
    def test_agrees_with_higher_order_differences(self, ref_params, small_context):
        grad = grad_log_likelihood(ref_params, small_context, step_scale=1e-5)
        vector = pack_params(ref_params)
        m, d, u = 3, 3, ref_params.threshold

        def f(v):
            return log_likelihood(unpack_params(v, m, d, u), small_context)

        # fourth-order central difference as the independent route
        for i in (0, 4, 9, 12):
            h = 1e-4 * (1.0 + abs(vector[i]))
            e = np.zeros_like(vector)
            e[i] = 1.0
            rich = (
                8.0 * (f(vector + h * e) - f(vector - h * e))
                - (f(vector + 2 * h * e) - f(vector - 2 * h * e))
            ) / (12.0 * h)
            assert grad[i] == pytest.approx(rich, rel=2e-4, abs=2e-4)

    def test_error_names_offending_parameter(self):
        values = np.array([[0.0], [0.9]])
        covs = np.full((2, 1), 1.0)
        # base point is just inside the guard; the intercept probe is
        # the first coordinate whose bump pushes the exponent over
        params = ModelParams(np.array([[0.4]]), np.array([0.0, 699.9999999]), 0.7)
        context = build_context(values, covs, 0.7)
        with pytest.raises(ValueError, match="volatility\\[0\\]"):
            grad_log_likelihood(params, context)
