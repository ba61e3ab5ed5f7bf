import json

import numpy as np
import pytest
from scipy import optimize, stats

from contdid import (
    CrossSection,
    Dataset,
    EmptySelectionError,
    ValidationError,
    dominance_test,
    ecdf,
    estimate_crossing,
    fit_piecewise_q,
    quantile,
    rank_map,
    simulate,
)
from contdid.empirical import DEFAULT_Q_KNOTS, PiecewiseQFit


class TestEcdf:
    def test_basic_values(self):
        f = ecdf([1.0, 2.0, 3.0])
        assert f(2.0) == pytest.approx(2 / 3)
        assert f(0.5) == 0.0
        assert f(3.0) == 1.0

    def test_ties_accumulate(self):
        f = ecdf([1.0, 1.0, 2.0])
        assert f(1.0) == pytest.approx(2 / 3)

    def test_quantile_generalized_inverse(self):
        f = ecdf([1.0, 2.0, 3.0])
        assert quantile(f, 0.5) == 2.0
        assert quantile(f, 1.0) == 3.0
        assert quantile(f, 1 / 3) == 1.0

    def test_quantile_rejects_bad_levels(self):
        f = ecdf([1.0, 2.0])
        with pytest.raises(ValidationError):
            quantile(f, 0.0)
        with pytest.raises(ValidationError):
            quantile(f, 1.5)

    def test_quantile_of_ecdf_identity_at_untied_points(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=57)
        f = ecdf(v)
        for x in v:
            assert quantile(f, float(f(x))) == x

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ecdf([])


class TestCrossing:
    def test_identical_samples_hit_left_trim(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=500)
        s = CrossSection(1, np.zeros(500), x)
        cr = estimate_crossing(s, CrossSection(2, np.zeros(500), x.copy()))
        f = ecdf(x)
        assert cr.location == quantile(f, 0.05)
        assert cr.objective == 0.0
        # the whole trimmed interval minimizes, so the flat set spans it
        assert cr.flat_set_width == pytest.approx(cr.search_interval[1] - cr.search_interval[0])

    def test_minimizer_is_exact_over_pooled_points(self):
        rng = np.random.default_rng(2)
        x1 = rng.normal(0, 2, 311)
        x2 = rng.normal(0.3, 1, 271)
        cr = estimate_crossing(CrossSection(1, np.zeros(311), x1), CrossSection(2, np.zeros(271), x2))
        f1, f2 = ecdf(x1), ecdf(x2)
        lo, hi = cr.search_interval
        pooled = np.unique(np.concatenate([x1, x2]))
        pts = np.concatenate([[lo], pooled[(pooled > lo) & (pooled <= hi)]])
        assert np.all(np.abs(f2(pts) - f1(pts)) >= cr.objective - 1e-15)
        assert abs(f2(cr.location) - f1(cr.location)) == cr.objective

    def test_affine_equivariance_exact(self):
        rng = np.random.default_rng(3)
        x1 = rng.normal(0, 2, 400)
        x2 = rng.normal(1, 1, 500)
        cr = estimate_crossing(CrossSection(1, np.zeros(400), x1), CrossSection(2, np.zeros(500), x2))
        a, b = 2.5, -3.0
        cr2 = estimate_crossing(
            CrossSection(1, np.zeros(400), a * x1 + b), CrossSection(2, np.zeros(500), a * x2 + b)
        )
        assert cr2.location == a * cr.location + b
        assert cr2.objective == cr.objective

    def test_linear_dgp_recovers_cdf_crossing(self, linear_dgp):
        # independent oracle: bisect F1(x) = F2(x) on the known normal CDFs
        f = lambda x: stats.norm.cdf(x / 2.0) - stats.norm.cdf(x - 1.0)
        x_star = optimize.brentq(f, 1.0, 4.0, xtol=1e-12)
        assert x_star == pytest.approx(2.0, abs=1e-9)
        hits = 0
        for seed in range(10):
            ds = simulate(linear_dgp, 20_000, seed=seed)
            cr = estimate_crossing(ds.period(1), ds.period(2))
            hits += abs(cr.location - x_star) < 0.1
        assert hits >= 9

    def test_two_gaussians_oracle(self):
        # oracle: Phi(x) = Phi((x - 0.5)/2) crosses at x = -0.5
        f = lambda x: stats.norm.cdf(x) - stats.norm.cdf((x - 0.5) / 2.0)
        x_star = optimize.brentq(f, -2.0, 2.0, xtol=1e-12)
        assert x_star == pytest.approx(-0.5, abs=1e-9)
        rng = np.random.default_rng(8)
        x1 = rng.normal(0, 1, 50_000)
        x2 = 0.5 + 2.0 * rng.normal(size=50_000)
        cr = estimate_crossing(CrossSection(1, np.zeros_like(x1), x1),
                               CrossSection(2, np.zeros_like(x2), x2))
        assert abs(cr.location - x_star) < 0.05

    def test_bad_trims_rejected(self):
        s = CrossSection(1, [0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            estimate_crossing(s, s, trim_lower=0.9, trim_upper=0.1)

    def test_json_keys(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=50)
        cr = estimate_crossing(CrossSection(1, np.zeros(50), x), CrossSection(2, np.zeros(50), x))
        keys = list(json.loads(cr.to_json()))
        assert keys == ["location", "objective", "trim_lower", "trim_upper", "flat_set_width"]


class TestRankMap:
    def _dataset(self, x1, x2):
        return Dataset.from_cross_sections(
            [CrossSection(1, np.zeros_like(x1), x1), CrossSection(2, np.zeros_like(x2), x2)]
        )

    def test_identity_on_identical_samples(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=200)
        q = rank_map(self._dataset(x, x.copy()), 1, 2)
        np.testing.assert_array_equal(q(x), x)

    def test_location_shift(self):
        rng = np.random.default_rng(6)
        x2 = rng.normal(size=150)
        x1 = x2 + 3.0
        q = rank_map(self._dataset(x1, x2), 1, 2)
        np.testing.assert_array_equal(q(x2), x2 + 3.0)

    def test_linear_dgp_closed_form(self, linear_dgp):
        ds = simulate(linear_dgp, 40_000, seed=1)
        q = rank_map(ds, 1, 2)
        xs = np.quantile(ds.reference.treatments, [0.2, 0.5, 0.8])
        # population: q(x) = gamma_1 + delta_1 * (x - gamma_2) / delta_2
        truth = 0.0 + 2.0 * (xs - 1.0) / 1.0
        assert np.max(np.abs(q(xs) - truth)) < 0.08

    def test_monotone_and_maps_into_source_values(self):
        rng = np.random.default_rng(7)
        x1 = rng.normal(0, 2, 97)
        x2 = rng.normal(1, 1, 131)
        q = rank_map(self._dataset(x1, x2), 1, 2)
        out = q(np.sort(x2))
        assert np.all(np.diff(out) >= 0)
        assert set(out.tolist()) <= set(x1.tolist())

    def test_increasing_map_equivariance(self):
        rng = np.random.default_rng(8)
        x1 = rng.normal(0, 2, 80)
        x2 = rng.normal(1, 1, 80)
        q = rank_map(self._dataset(x1, x2), 1, 2)
        psi = np.exp
        q_psi = rank_map(self._dataset(psi(x1), psi(x2)), 1, 2)
        np.testing.assert_array_equal(q_psi(psi(x2)), psi(q(x2)))

    def test_below_support_clamped_and_flagged(self):
        q = rank_map(self._dataset(np.array([1.0, 2.0]), np.array([5.0, 6.0])), 1, 2)
        val, flag = q.evaluate(4.0, with_flags=True)
        assert val == 1.0 and flag


class TestDominance:
    def test_identical_samples(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=400)
        res = dominance_test(CrossSection(1, np.zeros(400), x),
                             CrossSection(2, np.zeros(400), x.copy()),
                             (-1.0, 1.0), n_boot=99, seed=0)
        assert res.statistic == 0.0
        assert res.p_value > 0.5

    def test_shifted_alternative_rejects(self):
        rng = np.random.default_rng(10)
        x2 = rng.normal(size=5000)
        x1 = x2 - 0.25  # F1 sits strictly above F2: clear violation of F1 <= F2
        res = dominance_test(CrossSection(1, np.zeros(5000), x1),
                             CrossSection(2, np.zeros(5000), x2),
                             (-1.0, 1.0), n_boot=199, seed=0)
        assert res.p_value < 0.05

    def test_statistic_matches_order_statistics(self):
        x1 = np.array([1.0, 2.0, 3.0, 4.0])
        x2 = x1 + 1.0
        # on [1.5, 4.5]: F1 - F2 peaks at x = 4.0 with 4/4 - 3/4 = 0.25
        res = dominance_test(CrossSection(1, np.zeros(4), x1), CrossSection(2, np.zeros(4), x2),
                             (1.5, 4.5), n_boot=99, seed=0)
        assert res.statistic == pytest.approx(0.25)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(11)
        x1 = rng.normal(size=300)
        x2 = rng.normal(0.1, 1, 300)
        args = (CrossSection(1, np.zeros(300), x1), CrossSection(2, np.zeros(300), x2), (-1, 1))
        a = dominance_test(*args, n_boot=99, seed=5)
        b = dominance_test(*args, n_boot=99, seed=5)
        assert a == b

    def test_validation(self):
        s = CrossSection(1, [0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            dominance_test(s, s, (2.0, 1.0))
        with pytest.raises(ValidationError):
            dominance_test(s, s, (5.0, 6.0))  # outside pooled support
        with pytest.raises(ValidationError):
            dominance_test(s, s, (0.0, 3.0), n_boot=10)


class TestPiecewiseQFit:
    def test_default_knots(self):
        assert DEFAULT_Q_KNOTS == (12.0, 15.2, 23.4, 26.8)

    def test_duplicated_samples_give_zero(self):
        rng = np.random.default_rng(12)
        x = rng.normal(19.4, 5.0, 2000)
        fit = fit_piecewise_q(CrossSection(1, np.zeros(2000), x),
                              CrossSection(2, np.zeros(2000), x.copy()))
        assert np.max(np.abs(fit.zeta)) < 1e-8

    def test_recovers_generating_map(self):
        zeta_true = (0.10, -0.05, -0.05)
        gen = PiecewiseQFit(knots=DEFAULT_Q_KNOTS, zeta=zeta_true, fit_error=0.0)
        rng = np.random.default_rng(13)
        x1 = rng.normal(19.4, 5.0, 20_000)
        x2 = gen(rng.normal(19.4, 5.0, 20_000))  # push an independent copy through the map
        fit = fit_piecewise_q(CrossSection(1, np.zeros_like(x1), x1),
                              CrossSection(2, np.zeros_like(x2), x2))
        assert np.max(np.abs(np.array(fit.zeta) - np.array(zeta_true))) < 0.02

    def test_identity_below_first_knot_and_slope_one_above_last(self):
        fit = PiecewiseQFit(knots=DEFAULT_Q_KNOTS, zeta=(0.10, -0.05, -0.05), fit_error=0.0)
        xs = np.array([5.0, 11.9])
        np.testing.assert_array_equal(fit(xs), xs)
        hi = fit(np.array([30.0, 31.0]))
        assert hi[1] - hi[0] == pytest.approx(1.0)
        assert fit.implied_last_coefficient == pytest.approx(-sum((0.10, -0.05, -0.05)))

    def test_no_mass_between_knots_rejected(self):
        x = np.linspace(100.0, 110.0, 50)
        with pytest.raises(EmptySelectionError):
            fit_piecewise_q(CrossSection(1, np.zeros(50), x), CrossSection(2, np.zeros(50), x))

    def test_json_keys(self):
        fit = PiecewiseQFit(knots=DEFAULT_Q_KNOTS, zeta=(0.0, 0.0, 0.0), fit_error=0.0)
        assert list(json.loads(fit.to_json())) == ["knots", "zeta", "fit_error"]

    def test_bad_knots_rejected(self):
        s = CrossSection(1, [0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            fit_piecewise_q(s, s, knots=(3.0, 2.0, 4.0, 5.0))
