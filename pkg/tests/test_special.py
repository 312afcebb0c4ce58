"""Accuracy tests for the special functions against mpmath and against
frozen high-precision values.

The frozen constants were computed once with mpmath at 50+ digits and
pasted in, so the suite does not depend on mpmath being importable for
the most load-bearing checks; the grid comparisons do use it directly.
"""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pluvia import special

mp.mp.dps = 60


# Values frozen from mpmath at 60 digits: (x, Phi(x)), (x, log Phi(x)), etc.
FROZEN_CDF = [
    (0.0, 0.5),
    (0.7, 0.758036347776927),
    (-0.7, 0.24196365222307303),
    (1.959963984540054, 0.975),
    (-5.0, 2.866515718791939e-07),
    (-10.0, 7.619853024160525e-24),
    (-37.0, 5.725571222524577e-300),
]
FROZEN_LOG_CDF = [
    (0.7, -0.2770239422771313),
    (0.0, -0.6931471805599453),
    (-10.0, -53.23128515051247),
    (-37.0, -689.0305855768906),
    (-100.0, -5005.524208694205),
    (-300.0, -45006.62273211866),
]
FROZEN_QUANTILE = [
    (0.5, 0.0),
    (0.975, 1.9599639845400543),
    (0.025, -1.9599639845400543),
    (0.8413447460685429, 1.0),
    (1e-10, -6.361340902404057),
]
CHI2_1DF_95 = 3.841458820694126


def test_normal_cdf_frozen_values():
    for x, expected in FROZEN_CDF:
        assert special.normal_cdf(x) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_normal_cdf_grid_against_mpmath():
    xs = np.linspace(-37.0, 37.0, 601)
    got = special.normal_cdf(xs)
    for x, g in zip(xs, got):
        ref = float(mp.ncdf(x))
        assert abs(g - ref) < 1e-10
        if ref > 1e-290:
            assert abs(g - ref) <= 1e-10 * max(1.0, abs(ref)) or abs(
                g / ref - 1.0
            ) < 1e-11


def test_log_normal_cdf_frozen_values():
    for x, expected in FROZEN_LOG_CDF:
        assert special.log_normal_cdf(x) == pytest.approx(expected, rel=1e-13)


def test_log_normal_cdf_grid_against_mpmath():
    xs = np.concatenate(
        [np.linspace(-300.0, 8.5, 700), [-37.0, -10.001, -10.0, -9.999, 8.2]]
    )
    got = special.log_normal_cdf(xs)
    for x, g in zip(xs, got):
        ref = float(mp.log(mp.ncdf(mp.mpf(x))))
        assert abs(g - ref) <= 1e-10 * max(1.0, abs(ref))


def test_log_normal_cdf_finite_deep_into_tail():
    for x in (-37.0, -100.0, -1000.0, -30000.0):
        assert math.isfinite(special.log_normal_cdf(x))


def test_normal_quantile_frozen_values():
    for p, expected in FROZEN_QUANTILE:
        assert special.normal_quantile(p) == pytest.approx(expected, abs=2e-9)


def test_normal_quantile_grid_against_mpmath():
    ps = np.concatenate(
        [np.linspace(0.001, 0.999, 199), [1e-12, 1e-300, 1.0 - 1e-12]]
    )
    for p in ps:
        got = float(special.normal_quantile(p))
        # 1 - 2p needs working precision beyond p's own exponent.
        with mp.workdps(400):
            ref = float(-mp.sqrt(2) * mp.erfinv(1 - 2 * mp.mpf(p)))
        assert abs(got - ref) < 2e-9 * max(1.0, abs(ref))


def test_normal_quantile_edge_cases():
    assert special.normal_quantile(0.0) == -math.inf
    assert special.normal_quantile(1.0) == math.inf
    assert math.isnan(float(special.normal_quantile(-0.1)))


def test_gamma_grid_against_mpmath():
    for s in (0.5, 1.0, 1.5, 2.0, 2.5, 5.0, 17.0):
        for x in (1e-8, 0.05, 0.5, 1.0, 2.5, 5.0, 20.0, 150.0):
            ref_p = float(mp.gammainc(s, 0, x, regularized=True))
            ref_q = float(mp.gammainc(s, x, mp.inf, regularized=True))
            assert float(special.gamma_p(s, x)) == pytest.approx(ref_p, abs=1e-12)
            assert float(special.gamma_q(s, x)) == pytest.approx(ref_q, abs=1e-12)


def test_log_gamma_q_deep_tail():
    # p-values far below the smallest positive double stay representable
    # through their log.
    got = special.chi2_log10_sf(1500.0, 5)
    ref = float(mp.log10(mp.gammainc(mp.mpf("2.5"), 750, mp.inf, regularized=True)))
    assert got == pytest.approx(ref, rel=1e-12)
    # the direct survival probability has collapsed to the subnormal
    # range by then; only the log form is still informative
    assert special.chi2_sf(1500.0, 5) < 1e-308


def test_chi2_sf_moderate():
    assert special.chi2_sf(3.8414588206941227, 1) == pytest.approx(0.05, rel=1e-10)
    ref = float(mp.gammainc(2, 3.0, mp.inf, regularized=True))
    assert special.chi2_sf(6.0, 4) == pytest.approx(ref, rel=1e-12)


def test_chi2_quantile_1df():
    assert special.chi2_quantile_1df(0.95) == pytest.approx(CHI2_1DF_95, abs=1e-8)
    with pytest.raises(ValueError):
        special.chi2_quantile_1df(1.0)


def test_normal_sf_complement():
    xs = np.linspace(-8, 8, 161)
    np.testing.assert_allclose(
        special.normal_sf(xs), 1.0 - special.normal_cdf(xs), atol=1e-15
    )


@settings(max_examples=60, deadline=None)
@given(st.floats(-36.0, 36.0))
def test_cdf_symmetry(x):
    assert float(special.normal_cdf(x)) + float(
        special.normal_cdf(-x)
    ) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-9, 1.0 - 1e-9))
def test_quantile_roundtrip(p):
    assert float(special.normal_cdf(special.normal_quantile(p))) == pytest.approx(
        p, abs=1e-11
    )


@settings(max_examples=60, deadline=None)
@given(st.floats(-35.0, 35.0), st.floats(1e-6, 1.0))
def test_cdf_monotone(x, dx):
    assert float(special.normal_cdf(x + dx)) >= float(special.normal_cdf(x))


def test_ufuncs_accept_arrays():
    xs = np.array([[-1.0, 0.0], [1.0, 2.0]])
    assert special.normal_cdf(xs).shape == (2, 2)
    assert special.log_normal_cdf(xs).shape == (2, 2)
    assert special.normal_quantile(np.array([0.25, 0.75])).shape == (2,)
