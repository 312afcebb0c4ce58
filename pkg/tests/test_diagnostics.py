import math

import numpy as np
import pytest
from scipy import stats

from helpers import brute_cross_corr, brute_dry_spells, brute_transitions
from pluvia.diagnostics import (
    DEFAULT_BIN_EDGES,
    build_report,
    cross_correlation,
    dry_spell_lengths,
    envelope,
    forecast_odds,
    occurrence_given_intensity,
    qq_pairs,
    transition_probs,
)
from pluvia.model import CovariatePanel, ModelParams, PrecipPanel


def panel_from(columns, stations=None):
    values = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    times = 3600 * np.arange(values.shape[0], dtype=np.int64)
    if stations is None:
        stations = tuple(f"g{i}" for i in range(values.shape[1]))
    return PrecipPanel(values=values, times=times, stations=stations)


def random_panel(generator, n_hours, n_stations):
    # sprinkle zeros, sub-threshold drizzle, and solid wet hours
    kind = generator.integers(0, 3, size=(n_hours, n_stations))
    values = np.where(
        kind == 0,
        0.0,
        np.where(
            kind == 1,
            generator.uniform(0.01, 0.19, size=(n_hours, n_stations)),
            generator.uniform(0.2, 8.0, size=(n_hours, n_stations)),
        ),
    )
    return panel_from(values.T)


class TestDrySpells:
    def test_hand_worked(self):
        panel = panel_from([[0, 0, 1.5, 0, 0.3, 0, 0, 0, 2.0, 0]])
        np.testing.assert_array_equal(
            dry_spell_lengths(panel, "g0"), [1, 1, 2, 3]
        )

    def test_never_dry(self):
        panel = panel_from([[1.0, 2.0, 3.0]])
        assert dry_spell_lengths(panel, "g0").size == 0

    def test_all_dry(self):
        panel = panel_from([[0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(dry_spell_lengths(panel, "g0"), [3])

    def test_matches_brute_force(self):
        generator = np.random.default_rng(404)
        for _ in range(30):
            n = int(generator.integers(1, 50))
            panel = random_panel(generator, n, 1)
            ours = dry_spell_lengths(panel, "g0").tolist()
            assert ours == brute_dry_spells(panel.values[:, 0].tolist())


class TestTransitions:
    def test_hand_worked(self):
        panel = panel_from([[0.0, 0.5, 0.5, 0.0, 0.1, 0.5]])
        t = transition_probs(panel, "g0", wet_threshold=0.2)
        # wet origins: hours 1, 2 -> next wet, next dry
        assert t.p_wet_given_wet == pytest.approx(0.5)
        # dry origins: hours 0, 3 -> next wet, next drizzle(dry-side fail)
        assert t.p_wet_given_dry == pytest.approx(0.5)
        assert t.n_wet_origins == 2 and t.n_dry_origins == 2
        assert t.p_dry_given_wet == pytest.approx(0.5)

    def test_none_when_unobserved(self):
        panel = panel_from([[0.0, 0.0, 0.0]])
        t = transition_probs(panel, "g0")
        assert t.p_wet_given_wet is None
        assert t.p_dry_given_wet is None
        assert t.p_wet_given_dry == 0.0

    def test_matches_brute_force(self):
        generator = np.random.default_rng(405)
        for _ in range(30):
            n = int(generator.integers(2, 50))
            panel = random_panel(generator, n, 1)
            ours = transition_probs(panel, "g0", wet_threshold=0.2)
            ww, wd, n_wet, n_dry = brute_transitions(panel.values[:, 0].tolist(), 0.2)
            assert ours.p_wet_given_wet == ww
            assert ours.p_wet_given_dry == wd
            assert ours.n_wet_origins == n_wet
            assert ours.n_dry_origins == n_dry

    def test_too_short(self):
        with pytest.raises(ValueError):
            transition_probs(panel_from([[1.0]]), "g0")


class TestOccurrence:
    def test_counts_and_probs_by_hand(self):
        # origins with value in (0.2, 0.8]: hours 0 and 2; their next
        # hours are wet then dry
        panel = panel_from([[0.5, 1.0, 0.4, 0.0, 5.0]])
        table = occurrence_given_intensity(panel, "g0", bin_edges=(0.2, 0.8))
        assert table.bins == ((0.2, 0.8), (0.8, math.inf))
        np.testing.assert_array_equal(table.counts, [2, 1])
        np.testing.assert_array_equal(table.occurrences, [1, 1])
        np.testing.assert_allclose(table.probs, [0.5, 1.0])

    def test_chi2_against_scipy(self):
        generator = np.random.default_rng(406)
        checked = 0
        for _ in range(20):
            panel = random_panel(generator, 400, 1)
            table = occurrence_given_intensity(panel, "g0")
            if table.chi2_stat is None:
                continue
            contingency = np.column_stack(
                [table.occurrences, table.counts - table.occurrences]
            )
            # drop all-zero columns the same way a homogeneity test must
            keep = contingency.sum(axis=0) > 0
            stat, p, dof, _ = stats.chi2_contingency(
                contingency[:, keep], correction=False
            )
            assert table.chi2_stat == pytest.approx(stat, rel=1e-10)
            assert table.dof == dof
            assert table.p_value == pytest.approx(p, rel=1e-8, abs=1e-12)
            checked += 1
        assert checked >= 15

    def test_empty_classes_dropped(self):
        panel = panel_from([[0.3, 0.3, 0.3, 0.3, 0.3]])
        table = occurrence_given_intensity(
            panel, "g0", bin_edges=(0.2, 0.8, 1.4)
        )
        assert (0.8, 1.4) in table.dropped_bins
        assert table.chi2_stat is None  # one surviving class

    def test_log10_p_tracks_p(self):
        generator = np.random.default_rng(407)
        panel = random_panel(generator, 500, 1)
        table = occurrence_given_intensity(panel, "g0")
        if table.p_value is not None and table.p_value > 0:
            assert table.log10_p == pytest.approx(
                math.log10(table.p_value), abs=1e-9
            )


class TestCrossCorrelation:
    def test_matches_brute_force(self):
        generator = np.random.default_rng(408)
        for _ in range(25):
            n = int(generator.integers(4, 50))
            panel = random_panel(generator, n, 2)
            lags = [-3, -1, 0, 2]
            ours = cross_correlation(panel, "g0", "g1", lags)
            for k, lag in enumerate(lags):
                ref = brute_cross_corr(
                    panel.values[:, 0].tolist(), panel.values[:, 1].tolist(), lag
                )
                if ref is None:
                    assert math.isnan(ours[k])
                else:
                    assert ours[k] == pytest.approx(ref, abs=1e-12)

    def test_symmetry(self):
        generator = np.random.default_rng(409)
        panel = random_panel(generator, 80, 2)
        lags = [-5, -2, 0, 2, 5]
        ab = cross_correlation(panel, "g0", "g1", lags)
        ba = cross_correlation(panel, "g1", "g0", [-l for l in lags])
        np.testing.assert_array_equal(ab, ba)

    def test_constant_overlap_is_nan(self):
        panel = panel_from([[0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 1.0, 3.0]])
        out = cross_correlation(panel, "g0", "g1", [0])
        assert math.isnan(out[0])


class TestQQ:
    def test_against_numpy_quantile(self):
        generator = np.random.default_rng(410)
        obs = generator.gamma(2.0, size=300)
        sim = generator.gamma(2.5, size=700)
        table = qq_pairs(obs, sim)
        np.testing.assert_allclose(
            table.observed, np.quantile(obs, table.probs), atol=0
        )
        np.testing.assert_allclose(
            table.simulated, np.quantile(sim, table.probs), atol=0
        )

    def test_identical_samples_on_diagonal(self):
        x = np.array([0.1, 0.5, 2.0, 3.0, 9.0])
        table = qq_pairs(x, x, probs=[0.25, 0.5, 0.75])
        np.testing.assert_array_equal(table.observed, table.simulated)

    def test_validation(self):
        with pytest.raises(ValueError):
            qq_pairs([], [1.0])
        with pytest.raises(ValueError):
            qq_pairs([1.0], [1.0], probs=[0.0, 0.5])


class TestForecastOdds:
    def test_perfectly_predictable_chain(self):
        # two stations handing rain back and forth each hour, with
        # volatility so small the rollout is effectively deterministic:
        # the model tracks the alternation, persistence is always one
        # step behind at odd horizons
        params = ModelParams(
            contagion=np.array([[0.0, 0.95], [0.95, 0.0]]),
            volatility_coefs=np.array([-8.0, 0.0]),
            threshold=0.7,
        )
        n = 40
        times = 3600 * np.arange(n, dtype=np.int64)
        covs = CovariatePanel(
            values=np.zeros((n, 1)), times=times, names=("a",)
        )
        values = np.zeros((n, 2))
        values[0::2, 0] = 5.0
        values[1::2, 1] = 5.0
        panel = PrecipPanel(values=values, times=times, stations=("x", "y"))
        odds = forecast_odds(
            params, covs, panel, horizons=(1, 2), n_paths=20, origin_stride=3
        )
        assert odds.n_origins == len(range(0, n - 2, 3))
        np.testing.assert_array_equal(odds.model_accuracy, [1.0, 1.0])
        np.testing.assert_array_equal(odds.persistence_accuracy, [0.0, 1.0])

    def test_alignment_and_horizon_checks(self, ref_params, small_covariates, small_panel):
        with pytest.raises(ValueError):
            forecast_odds(ref_params, small_covariates, small_panel, horizons=(3, 1))
        with pytest.raises(ValueError):
            forecast_odds(ref_params, small_covariates, small_panel, horizons=(500,))

    def test_deterministic_in_seed(self, ref_params, small_covariates, small_panel):
        kw = dict(horizons=(1, 3), n_paths=30, origin_stride=24, master_seed=9)
        a = forecast_odds(ref_params, small_covariates, small_panel, **kw)
        b = forecast_odds(ref_params, small_covariates, small_panel, **kw)
        np.testing.assert_array_equal(a.model_accuracy, b.model_accuracy)


class TestEnvelope:
    def test_band_ordering_and_shape(self, ref_params, small_covariates):
        band = envelope(
            lambda p: p.values.mean(axis=0),
            ref_params,
            small_covariates,
            n_replicas=10,
        )
        assert band.values.shape == (3, 3)
        assert np.all(band.values[0] <= band.values[1])
        assert np.all(band.values[1] <= band.values[2])

    def test_statistic_shape_enforced(self, ref_params, small_covariates):
        with pytest.raises(ValueError):
            envelope(
                lambda p: p.values.mean(),  # scalar, not 1-D
                ref_params,
                small_covariates,
                n_replicas=2,
            )

    def test_reproducible(self, ref_params, small_covariates):
        kw = dict(n_replicas=5, master_seed=77)
        a = envelope(lambda p: p.values.max(axis=0), ref_params, small_covariates, **kw)
        b = envelope(lambda p: p.values.max(axis=0), ref_params, small_covariates, **kw)
        np.testing.assert_array_equal(a.values, b.values)


def test_build_report_structure(ref_params, small_panel, small_covariates):
    report = build_report(ref_params, small_panel, small_covariates)
    assert set(report["stations"]) == set(small_panel.stations)
    first = report["per_station"][small_panel.stations[0]]
    assert {"dry_spells", "transitions", "occurrence_by_intensity"} <= set(first)
    assert len(report["cross_correlation"]) == 3  # unordered station pairs
    # round-trips through json
    import json

    json.dumps(report)
