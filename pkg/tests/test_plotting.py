"""
Tests for SVG band rendering.
"""

import numpy as np
import pytest

import src.plotting as plotting
from src.bands import GridSpec, build_complete_case_band
from src.estimators import BandwidthSpec
from src.kernelmath import EPANECHNIKOV


@pytest.fixture
def band(complete_sample):
    return build_complete_case_band(
        complete_sample, EPANECHNIKOV, BandwidthSpec(0.30, 0.25), 0.10, GridSpec(0.0, 1.0, 50)
    )


class TestRenderBandSvg:
    """Tests for render_band_svg."""

    def test_svg_text(self, band):
        """Test the output is an SVG document with the default title."""
        pytest.importorskip("matplotlib")
        svg = plotting.render_band_svg(band, reference=lambda x: np.sin(2 * np.pi * x))

        assert svg.lstrip().startswith("<?xml")
        assert "</svg>" in svg
        assert "complete-case band, n=300" in svg

    def test_deterministic(self, band):
        """Test identical bands render to identical SVG text."""
        pytest.importorskip("matplotlib")

        assert plotting.render_band_svg(band, title="t") == plotting.render_band_svg(band, title="t")

    def test_missing_matplotlib(self, band, monkeypatch):
        """Test a clear error when the plot extra is not installed."""
        monkeypatch.setattr(plotting, "MATPLOTLIB_AVAILABLE", False)

        with pytest.raises(plotting.PlottingError, match="requires matplotlib"):
            plotting.render_band_svg(band)
