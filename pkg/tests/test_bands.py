"""
Tests for bands, deviation statistics and the maximal-deviation test.
"""

import math

import numpy as np
import pytest

from src.bands import (
    BandError,
    GridSpec,
    Method,
    PointFlag,
    band_from_fit,
    build_band,
    build_bands,
    build_complete_case_band,
    build_full_data_band,
    complete_case_stat,
    critical_value,
    deviation_stat,
    fit_complete_case,
    fit_full_data,
    fit_ipw,
    flag_names,
    max_deviation_test,
    parse_flags,
    test_from_fit,
)
from src.estimators import BandwidthSpec, EpsilonSpec, Sample, draw_epsilons, kde
from src.kernelmath import EPANECHNIKOV, d_n, gumbel_quantile, kernel_constants, log_scale

BW = BandwidthSpec(delta=0.30, beta=0.25)
CONSTS = kernel_constants(EPANECHNIKOV)


def _truth(x):
    return np.cos(np.pi * np.asarray(x))


class TestGridSpec:
    """Tests for GridSpec."""

    def test_default_points(self):
        """Test 200 points on [0, 1]."""
        points = GridSpec().points()

        assert points.size == 200
        assert points[0] == 0.0 and points[-1] == 1.0

    def test_invalid(self):
        """Test reversed bounds and tiny grids."""
        with pytest.raises(BandError):
            GridSpec(1.0, 0.0)
        with pytest.raises(BandError):
            GridSpec(count=1)


class TestFlags:
    """Tests for flag rendering."""

    def test_round_trip(self):
        """Test names parse back to the same bits."""
        value = int(PointFlag.EMPTY_WINDOW | PointFlag.FLOORED_VARIANCE)

        assert flag_names(value) == "empty-window|floored-variance"
        assert parse_flags(flag_names(value)) == value
        assert flag_names(0) == ""
        assert parse_flags("") == 0

    def test_unknown_flag(self):
        """Test unknown flag names are rejected."""
        with pytest.raises(BandError, match="unknown flag"):
            parse_flags("bogus")


class TestBuildBand:
    """Tests for the proposed band."""

    def test_half_width_formula(self, mar_sample):
        """Test the half-width matches the closed form at every usable point."""
        band = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)
        n = mar_sample.n
        h = n ** -0.30
        factor = gumbel_quantile(0.05) / log_scale(n, 0.30) + d_n(n, 0.30, CONSTS)
        expected = np.sqrt(0.6 * band.sigma2 / (n * h * band.fhat)) * factor

        np.testing.assert_allclose(band.half_width, expected, rtol=1e-12)
        assert np.all(band.lower <= band.mhat)
        assert np.all(band.mhat <= band.upper)

    def test_header(self, mar_sample):
        """Test header metadata."""
        band = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.10)
        header = band.header()

        assert header["method"] == Method.IPW
        assert header["n"] == mar_sample.n
        assert header["kernel"] == "epanechnikov"
        assert header["x_alpha"] == pytest.approx(2.943515, abs=1e-5)
        assert header["c_K"] == 0.6

    def test_smaller_alpha_is_wider(self, mar_sample):
        """Test a 99% band contains the 95% band."""
        eps = np.zeros(mar_sample.n)
        wide = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.01, eps=eps)
        narrow = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05, eps=eps)

        assert np.all(wide.lower <= narrow.lower)
        assert np.all(narrow.upper <= wide.upper)
        assert wide.area() > narrow.area() > 0.0

    def test_empty_window_points(self):
        """Test empty windows get infinite bounds and the EMPTY_WINDOW flag."""
        x = np.concatenate([np.linspace(0.0, 0.2, 40), np.linspace(0.8, 1.0, 40)])
        sample = Sample.complete(x, np.sin(x))
        band = build_band(sample, EPANECHNIKOV, BandwidthSpec(0.32, 0.30), EpsilonSpec.zero(), 0.05)
        empty = (band.flags & PointFlag.EMPTY_WINDOW) != 0

        assert np.any(empty)
        assert np.all(np.isinf(band.lower[empty]))
        assert np.all(band.mhat[empty] == 0.0)
        assert math.isfinite(band.area())

    def test_all_empty_refused(self):
        """Test a band with no usable point raises."""
        sample = Sample.complete(np.linspace(5.0, 6.0, 30), np.zeros(30))

        with pytest.raises(BandError, match="empty kernel window"):
            build_band(sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)

    def test_translation_equivariance(self, mar_sample):
        """Test shifting X and the grid by the same amount shifts nothing else."""
        band = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)
        moved = build_band(
            mar_sample.shifted(2.0), EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05, GridSpec(2.0, 3.0, 200)
        )

        np.testing.assert_allclose(moved.lower, band.lower, atol=1e-8)
        np.testing.assert_allclose(moved.upper, band.upper, atol=1e-8)

    def test_eps_drawn_from_rng(self, mar_sample):
        """Test the same seed gives the same band."""
        spec = EpsilonSpec.uniform(1e-3)
        first = build_band(mar_sample, EPANECHNIKOV, BW, spec, 0.05, rng=np.random.default_rng(3))
        second = build_band(
            mar_sample, EPANECHNIKOV, BW, spec, 0.05,
            eps=draw_epsilons(spec, mar_sample.n, np.random.default_rng(3)),
        )

        np.testing.assert_array_equal(first.lower, second.lower)

    def test_non_positive_multiplier_refused(self, mar_sample):
        """Test an alpha so large the multiplier is negative."""
        with pytest.raises(BandError, match="non-positive"):
            build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 1.0 - 1e-12)

    def test_uniform_eps_needs_a_source(self, mar_sample):
        """Test a nonzero eps spec without rng or eps is refused instead of drawn unseeded."""
        with pytest.raises(BandError, match="needs rng"):
            build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.uniform(1e-3), 0.05)
        with pytest.raises(BandError, match="needs rng"):
            max_deviation_test(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.uniform(1e-3), _truth, 0.05)

    def test_zero_eps_needs_no_rng(self, mar_sample):
        """Test the zero spec works without a generator."""
        plain = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)
        seeded = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05, rng=np.random.default_rng(1))

        np.testing.assert_array_equal(plain.lower, seeded.lower)


class TestOtherBands:
    """Tests for the complete-case and full-data bands."""

    def test_full_data_equals_ipw_without_missingness(self, complete_sample):
        """Test the proposed band reduces to the full-data band."""
        ipw = build_band(complete_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)
        full = build_full_data_band(complete_sample, EPANECHNIKOV, BW, 0.05)

        np.testing.assert_allclose(ipw.lower, full.lower, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ipw.upper, full.upper, rtol=1e-12, atol=1e-12)
        assert full.method == Method.FULL_DATA

    def test_complete_case_band(self, mar_sample):
        """Test the complete-case band is built from observed records."""
        band = build_complete_case_band(mar_sample, EPANECHNIKOV, BW, 0.05)

        assert band.method == Method.COMPLETE_CASE
        assert band.beta is None
        assert np.all(band.upper > band.lower)

    def test_complete_case_density_from_complete_cases(self, mar_sample):
        """Test fbar is the KDE of the complete cases while the band keeps the full n."""
        grid = GridSpec().points()
        obs = mar_sample.observed
        subsample = Sample.complete(mar_sample.x[obs], mar_sample.y[obs])
        fit = fit_complete_case(mar_sample, EPANECHNIKOV, BW, grid)

        np.testing.assert_allclose(fit.fhat, kde(subsample, EPANECHNIKOV, fit.h, grid), rtol=1e-12)
        assert fit.n == mar_sample.n
        assert fit.h == BW.h(mar_sample.n)

    def test_build_bands_one_fit(self, mar_sample):
        """Test several alphas from one fit share the centre line."""
        fit = fit_ipw(mar_sample, EPANECHNIKOV, BW, None, GridSpec().points())
        bands = build_bands(fit, EPANECHNIKOV, BW.delta, [0.10, 0.05], beta=BW.beta)

        assert [b.alpha for b in bands] == [0.10, 0.05]
        np.testing.assert_array_equal(bands[0].mhat, bands[1].mhat)


class TestDeviationStat:
    """Tests for the normalized maximal deviation."""

    def test_zero_deviation(self, mar_sample):
        """Test the estimate itself as truth gives sup 0."""
        fit = fit_ipw(mar_sample, EPANECHNIKOV, BW, None, GridSpec().points())
        stat = deviation_stat(fit, lambda x: fit.mhat, BW.delta, CONSTS)

        assert stat.sup_value == 0.0
        assert 0.0 <= stat.u < 1.0

    def test_normalization(self, mar_sample):
        """Test u_n and u follow from the sup."""
        fit = fit_ipw(mar_sample, EPANECHNIKOV, BW, None, GridSpec().points())
        stat = deviation_stat(fit, _truth, BW.delta, CONSTS)
        n, h = fit.n, fit.h
        expected = log_scale(n, 0.3) * (math.sqrt(n * h / 0.6) * stat.sup_value - d_n(n, 0.3, CONSTS))

        assert stat.u_n == pytest.approx(expected, rel=1e-12)
        assert stat.u == pytest.approx(math.exp(-2 * math.exp(-expected)), rel=1e-12)

    def test_complete_case_stat_matches_without_missingness(self, complete_sample):
        """Test both statistics agree on complete data."""
        fit = fit_ipw(complete_sample, EPANECHNIKOV, BW, None, GridSpec().points())
        proposed = deviation_stat(fit, _truth, BW.delta, CONSTS)
        cc = complete_case_stat(complete_sample, EPANECHNIKOV, BW, _truth)

        assert cc.sup_value == pytest.approx(proposed.sup_value, rel=1e-12)
        assert cc.u == pytest.approx(proposed.u, rel=1e-12, abs=1e-15)

    def test_full_data_fit(self, complete_sample):
        """Test the full-data fit feeds the same statistic."""
        fit = fit_full_data(complete_sample, EPANECHNIKOV, BW, GridSpec().points())

        assert np.isfinite(deviation_stat(fit, _truth, BW.delta, CONSTS).u_n)


class TestMaxDeviationTest:
    """Tests for the maximal-deviation test."""

    def test_critical_value(self):
        """Test sqrt(c_K/(n h)) * (x_alpha/sqrt(2 delta log n) + d_n)."""
        n, h = 500, 500 ** -0.3
        expected = math.sqrt(0.6 / (n * h)) * (gumbel_quantile(0.05) / log_scale(n, 0.3) + d_n(n, 0.3, CONSTS))

        assert critical_value(n, h, 0.3, CONSTS, 0.05) == pytest.approx(expected, rel=1e-12)

    def test_far_null_rejected(self, mar_sample):
        """Test a null curve far from the data is rejected."""
        result = max_deviation_test(
            mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), lambda x: np.full(x.shape, 10.0), 0.05
        )

        assert result.reject
        assert result.t_n > result.critical

    def test_alpha_checked(self, mar_sample):
        """Test alpha must lie in (0, 1)."""
        with pytest.raises(BandError, match="alpha"):
            max_deviation_test(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), _truth, 1.5)

    def test_duality_with_band(self):
        """Test rejection happens exactly when m0 leaves the band, on 200 fixtures."""
        master = np.random.default_rng(2024)
        grid = GridSpec(0.0, 1.0, 50)
        discrepancies = 0
        for _ in range(200):
            n = int(master.integers(80, 200))
            x = master.normal(0.5, 1.0, n)
            y = np.sin(2 * x) + 0.5 * master.standard_normal(n)
            delta = (master.random(n) < 0.75).astype(int)
            delta[0] = 1
            sample = Sample(x, np.where(delta == 1, y, np.nan), delta)
            level = float(master.uniform(-0.5, 0.5))
            slope = float(master.uniform(-1.0, 1.0))
            alpha = float(master.choice([0.01, 0.05, 0.10, 0.20]))

            def m0(t, level=level, slope=slope):
                return level + slope * np.asarray(t)

            fit = fit_ipw(sample, EPANECHNIKOV, BW, None, grid.points())
            band = band_from_fit(fit, EPANECHNIKOV, BW.delta, alpha, beta=BW.beta)
            result = test_from_fit(fit, m0, alpha, BW.delta, CONSTS)
            if result.reject == band.contains(m0):
                discrepancies += 1

        assert discrepancies == 0


class TestBandResult:
    """Tests for BandResult helpers."""

    def test_contains_true_curve_with_wide_band(self, complete_sample):
        """Test a 99.9% band contains its own centre line."""
        band = build_full_data_band(complete_sample, EPANECHNIKOV, BW, 0.001)

        assert band.contains(band.mhat)

    def test_area_trapezoid(self, mar_sample):
        """Test area equals the trapezoid integral of the width."""
        band = build_band(mar_sample, EPANECHNIKOV, BW, EpsilonSpec.zero(), 0.05)
        width = band.upper - band.lower
        dx = np.diff(band.grid)
        expected = float(np.sum(dx * (width[1:] + width[:-1]) / 2))

        assert band.area() == pytest.approx(expected, rel=1e-12)

    def test_complete_case_fit_flags(self):
        """Test an all-observed constant response floors the variance."""
        sample = Sample.complete(np.linspace(0, 1, 100), np.ones(100))
        fit = fit_complete_case(sample, EPANECHNIKOV, BW, GridSpec().points())

        assert np.all(fit.flags & PointFlag.FLOORED_VARIANCE)
        assert fit.flag_counts()["floored-variance"] == 200
