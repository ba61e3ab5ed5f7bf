import numpy as np
import pytest

from contdid import (
    CrossSection,
    EmptyKernelWindowError,
    KernelSpec,
    ValidationError,
    cond_cdf,
    cond_mean,
    cond_quantile,
    default_bandwidth,
)
from contdid.kernels import KERNEL_FAMILIES


def unit_sd_vector(n: int) -> np.ndarray:
    v = np.arange(n, dtype=float)
    return v / np.std(v, ddof=1)


class TestKernelFamilies:
    @pytest.mark.parametrize("name", sorted(KERNEL_FAMILIES))
    def test_valid_density(self, name):
        k = KERNEL_FAMILIES[name]
        u = np.linspace(-2, 2, 20001)
        vals = k(u)
        assert np.all(vals >= 0)
        assert np.all(vals[np.abs(u) > 1] == 0)  # compact support on [-1, 1]
        du = u[1] - u[0]
        assert np.trapezoid(vals, dx=du) == pytest.approx(1.0, abs=1e-4)
        assert np.trapezoid(u * vals, dx=du) == pytest.approx(0.0, abs=1e-12)

    def test_unknown_family_rejected(self):
        with pytest.raises(ValidationError):
            KernelSpec(family="gaussian")

    def test_bad_bandwidth_rejected(self):
        with pytest.raises(ValidationError):
            KernelSpec(bandwidth=-0.5)
        with pytest.raises(ValidationError):
            KernelSpec(bandwidth="tiny")


class TestBandwidthRule:
    def test_examples(self):
        assert default_bandwidth(unit_sd_vector(10_000)) == pytest.approx(0.106, abs=1e-9)
        assert default_bandwidth(2.0 * unit_sd_vector(625)) == pytest.approx(0.424, abs=1e-9)

    def test_formula(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=777)
        assert default_bandwidth(v) == pytest.approx(1.06 * np.std(v, ddof=1) * 777 ** -0.25)

    def test_constant_vector_rejected(self):
        with pytest.raises(ValidationError):
            default_bandwidth(np.ones(10))


HAND_X = [0.0, 0.5, -0.5, 2.0, 0.2]
HAND_Y = [1.0, 2.0, 3.0, 4.0, 5.0]


def hand_weights():
    # biweight at x = 0, h = 1, computed with plain floats
    k = lambda u: 15.0 / 16.0 * (1 - u * u) ** 2 if abs(u) < 1 else 0.0
    return [k(x / 1.0) for x in HAND_X]


class TestCondCdf:
    def test_degenerate_window(self):
        s = CrossSection(1, [3.0, 3.0, 3.0], [0.0, 0.1, -0.1])
        spec = KernelSpec(bandwidth=1.0)
        assert cond_cdf(3.0, 0.0, s, spec) == 1.0
        assert cond_cdf(2.9, 0.0, s, spec) == 0.0

    def test_single_observation_indicator(self):
        s = CrossSection(1, [2.0, 9.0], [0.0, 50.0])
        spec = KernelSpec(bandwidth=1.0)
        assert cond_cdf(1.9, 0.0, s, spec) == 0.0
        assert cond_cdf(2.0, 0.0, s, spec) == 1.0

    def test_hand_computed_ratio(self):
        s = CrossSection(1, HAND_Y, HAND_X)
        spec = KernelSpec(bandwidth=1.0)
        w = hand_weights()
        expected = sum(wi for wi, y in zip(w, HAND_Y) if y <= 2.0) / sum(w)
        assert cond_cdf(2.0, 0.0, s, spec) == pytest.approx(expected, abs=1e-15)

    def test_valid_cdf_on_grid(self):
        rng = np.random.default_rng(1)
        s = CrossSection(1, rng.normal(size=300), rng.normal(size=300))
        spec = KernelSpec()
        grid = np.linspace(-4, 4, 101)
        vals = [cond_cdf(y, 0.0, s, spec) for y in grid]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] == 0.0 and vals[-1] == 1.0

    def test_empty_window_is_error(self):
        s = CrossSection(1, [1.0, 2.0], [0.0, 0.1])
        with pytest.raises(EmptyKernelWindowError):
            cond_cdf(1.0, 10.0, s, KernelSpec(bandwidth=0.5))


class TestCondQuantile:
    def test_equal_weights(self):
        s = CrossSection(1, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        spec = KernelSpec(bandwidth=1.0)
        assert cond_quantile(0.5, 0.0, s, spec) == 2.0
        assert cond_quantile(1.0, 0.0, s, spec) == 3.0

    def test_hand_computed_step(self):
        s = CrossSection(1, HAND_Y, HAND_X)
        spec = KernelSpec(bandwidth=1.0)
        w = hand_weights()
        total = sum(w)
        # weighted CDF steps in outcome order 1, 2, 3, 5 (y=4 has zero weight)
        order = sorted((y, wi) for y, wi in zip(HAND_Y, w) if wi > 0)
        cum = 0.0
        expected = None
        for y, wi in order:
            cum += wi / total
            if cum >= 0.6:
                expected = y
                break
        assert cond_quantile(0.6, 0.0, s, spec) == expected

    def test_monotone_transform_equivariance(self):
        rng = np.random.default_rng(2)
        s = CrossSection(1, rng.normal(size=200), rng.normal(size=200))
        spec = KernelSpec()
        psi = np.exp
        s_psi = CrossSection(1, psi(s.outcomes), s.treatments)
        for p in (0.1, 0.5, 0.9):
            assert cond_quantile(p, 0.0, s_psi, spec) == psi(cond_quantile(p, 0.0, s, spec))

    def test_bad_level(self):
        s = CrossSection(1, [1.0], [0.0])
        with pytest.raises(ValidationError):
            cond_quantile(0.0, 0.0, s, KernelSpec(bandwidth=1.0))


class TestCondMean:
    def test_constant_values(self):
        s = CrossSection(1, [0.0, 0.0], [0.0, 0.5])
        got = cond_mean(0.2, [7.0, 7.0], s.treatments, KernelSpec(bandwidth=1.0))
        assert got == pytest.approx(7.0, abs=1e-12)

    def test_symmetric_design_linear_values(self):
        x = np.array([-0.4, 0.4, -0.2, 0.2])
        values = 3.0 * x + 1.0
        assert cond_mean(0.0, values, x, KernelSpec(bandwidth=1.0)) == pytest.approx(1.0)

    def test_hand_computed(self):
        w = hand_weights()
        expected = sum(wi * y for wi, y in zip(w, HAND_Y)) / sum(w)
        got = cond_mean(0.0, HAND_Y, HAND_X, KernelSpec(bandwidth=1.0))
        assert got == pytest.approx(expected, abs=1e-15)

    def test_within_window_range(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=500)
        v = rng.normal(size=500)
        spec = KernelSpec(bandwidth=0.4)
        m = cond_mean(0.0, v, x, spec)
        inside = np.abs(x) < 0.4
        assert v[inside].min() <= m <= v[inside].max()

    def test_consistency_on_linear_regression(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=20_000)
        y = 2.0 * x + 0.1 * rng.standard_normal(20_000)
        x0 = float(np.median(x))
        m = cond_mean(x0, y, x, KernelSpec())
        assert abs(m - 2.0 * x0) < 0.05
