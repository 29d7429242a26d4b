"""
Tests for leave-one-out selection of the bandwidth exponents.
"""

import numpy as np
import pytest

from src.bandwidth import (
    BandwidthSelectionError,
    CvConfig,
    default_delta_grid,
    loo_regression_errors,
    select_bandwidths,
    select_beta,
    select_delta,
)
from src.config import EXPONENT_LOWER, EXPONENT_UPPER
from src.estimators import BandwidthSpec, Sample
from src.kernelmath import EPANECHNIKOV


class TestCvConfig:
    """Tests for the exponent grid."""

    def test_default_grid(self):
        """Test 14 exponents on [0.205, 0.330]."""
        grid = default_delta_grid()

        assert len(grid) == 14
        assert grid[0] == pytest.approx(0.205)
        assert grid[-1] == pytest.approx(0.330)

    def test_grid_sorted(self):
        """Test the grid is stored ascending."""
        config = CvConfig(delta_grid=[0.3, 0.25, 0.21])

        assert config.delta_grid == (0.21, 0.25, 0.3)

    @pytest.mark.parametrize("grid", [[], [0.2], [0.25, 0.34]])
    def test_grid_must_be_admissible(self, grid):
        """Test every exponent lies strictly inside (1/5, 1/3)."""
        with pytest.raises(BandwidthSelectionError):
            CvConfig(delta_grid=grid)


class TestLooErrors:
    """Tests for the leave-one-out residuals."""

    def test_matches_brute_force(self, rng):
        """Test against refitting without each point."""
        x = rng.uniform(0, 1, 40)
        y = x ** 2 + 0.1 * rng.standard_normal(40)
        h = 0.25
        errors = loo_regression_errors(x, y, EPANECHNIKOV, h)

        for i in range(40):
            keep = np.arange(40) != i
            w = EPANECHNIKOV((x[i] - x[keep]) / h)
            pred = float(np.sum(w * y[keep]) / np.sum(w)) if np.sum(w) > 0 else 0.0
            assert errors[i] == pytest.approx((y[i] - pred) ** 2, rel=1e-10, abs=1e-14)

    def test_isolated_point_predicts_zero(self):
        """Test an empty leave-one-out window predicts 0."""
        errors = loo_regression_errors(np.array([0.0, 10.0]), np.array([3.0, 4.0]), EPANECHNIKOV, 0.5)

        np.testing.assert_array_equal(errors, [9.0, 16.0])


class TestSelectDelta:
    """Tests for select_delta."""

    def test_selected_from_grid(self, mar_sample):
        """Test the choice is a grid point."""
        config = CvConfig()
        delta = select_delta(mar_sample, EPANECHNIKOV, None, config)

        assert delta in config.delta_grid

    def test_scale_invariant(self, mar_sample):
        """Test multiplying Y by a constant does not change the choice."""
        scaled = Sample(mar_sample.x, mar_sample.y * 7.0, mar_sample.delta)
        config = CvConfig()

        assert select_delta(mar_sample, EPANECHNIKOV, None, config) == select_delta(
            scaled, EPANECHNIKOV, None, config
        )

    def test_constant_response_ties_to_smallest(self, rng):
        """Test all-equal scores pick the smallest exponent (largest bandwidth)."""
        x = rng.uniform(0, 1, 200)
        sample = Sample.complete(x, np.full(200, 2.0))
        config = CvConfig()

        assert select_delta(sample, EPANECHNIKOV, None, config) == config.delta_grid[0]

    def test_small_sample_rejected(self):
        """Test fewer than 20 records is refused."""
        sample = Sample.complete(np.linspace(0, 1, 10), np.zeros(10))

        with pytest.raises(BandwidthSelectionError, match="at least 20"):
            select_delta(sample, EPANECHNIKOV, None, CvConfig())

    def test_needs_two_complete_cases(self):
        """Test a sample with one observed response is refused."""
        delta = np.zeros(30, dtype=int)
        delta[0] = 1
        y = np.full(30, np.nan)
        y[0] = 1.0
        sample = Sample(np.linspace(0, 1, 30), y, delta)

        with pytest.raises(BandwidthSelectionError, match="2 complete cases"):
            select_delta(sample, EPANECHNIKOV, None, CvConfig())


class TestSelectBeta:
    """Tests for select_beta."""

    def test_beta_below_delta(self, mar_sample):
        """Test the constraint 1/5 < beta <= delta - margin."""
        config = CvConfig()
        beta = select_beta(mar_sample, EPANECHNIKOV, None, 0.30, config)

        assert EXPONENT_LOWER < beta <= 0.30 - config.beta_margin

    def test_fallback_when_grid_is_above_delta(self, mar_sample):
        """Test delta - margin is used when no grid point is admissible."""
        config = CvConfig(delta_grid=[0.30, 0.32])

        assert select_beta(mar_sample, EPANECHNIKOV, None, 0.25, config) == pytest.approx(0.24)

    def test_midpoint_fallback_near_lower_bound(self, mar_sample):
        """Test the midpoint of (1/5, delta) when delta - margin leaves the range."""
        config = CvConfig(delta_grid=[0.30], beta_margin=0.01)

        assert select_beta(mar_sample, EPANECHNIKOV, None, 0.205, config) == pytest.approx(0.2025)

    def test_all_observed_ties_to_smallest(self, complete_sample):
        """Test a constant selection response gives the smallest admissible exponent."""
        config = CvConfig()

        assert select_beta(complete_sample, EPANECHNIKOV, None, 0.32, config) == config.delta_grid[0]


class TestSelectBandwidths:
    """Tests for the combined selector."""

    def test_returns_valid_spec(self, mar_sample):
        """Test the selected pair satisfies the constraint."""
        bw = select_bandwidths(mar_sample, EPANECHNIKOV, np.zeros(mar_sample.n))

        assert isinstance(bw, BandwidthSpec)
        assert EXPONENT_LOWER < bw.beta < bw.delta < EXPONENT_UPPER

    def test_deterministic(self, mar_sample):
        """Test repeated selection gives the same pair."""
        first = select_bandwidths(mar_sample, EPANECHNIKOV, None)
        second = select_bandwidths(mar_sample, EPANECHNIKOV, None)

        assert (first.delta, first.beta) == (second.delta, second.beta)
