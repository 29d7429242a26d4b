"""
Integration tests: CLI output against direct library calls on data drawn
from the simulation model.

The CLI reads the dataset back from disk, so equality below also checks that
dataset and band files preserve every double exactly.
"""

import json

import numpy as np
import pytest

from src.bands import GridSpec, Method, build_band, build_complete_case_band, max_deviation_test
from src.cli import EXIT_OK, cli
from src.dataset import write_dataset
from src.estimators import BandwidthSpec, EpsilonSpec, draw_epsilons
from src.kernelmath import EPANECHNIKOV
from src.output_writer import format_float, read_band
from src.simharness import (
    MissingModel,
    Stream,
    apply_missingness,
    gen_sample,
    regression_function,
    replication_rng,
)

pytestmark = pytest.mark.integration

SEED = 99
FIXED = BandwidthSpec(delta=0.30, beta=0.25)


@pytest.fixture
def model_sample():
    """n=500 draw from the simulation model with about a quarter missing."""
    latent = gen_sample(500, replication_rng(SEED, 0, Stream.DATA))
    return apply_missingness(latent, MissingModel.B, replication_rng(SEED, 0, Stream.MISSINGNESS))


@pytest.fixture
def dataset_path(tmp_path, model_sample):
    return write_dataset(model_sample, tmp_path / "data.csv")


def _assert_same_band(loaded, expected):
    for name in ("grid", "mhat", "fhat", "sigma2", "lower", "upper", "flags"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(expected, name), err_msg=name)
    assert loaded.header() == expected.header()


class TestCliMatchesLibrary:
    """CLI results are bit-identical to the library."""

    def test_band_zero_eps(self, tmp_path, dataset_path, model_sample):
        """Test the default band."""
        out = tmp_path / "band.csv"

        assert cli(["band", str(dataset_path), "--out", str(out)]) == EXIT_OK
        expected = build_band(model_sample, EPANECHNIKOV, FIXED, EpsilonSpec.zero(), 0.05, GridSpec())
        _assert_same_band(read_band(out), expected)

    def test_band_uniform_eps(self, tmp_path, dataset_path, model_sample):
        """Test perturbations are drawn from --seed in the same way."""
        out = tmp_path / "band.csv"
        argv = [
            "band", str(dataset_path), "--out", str(out),
            "--eps", "uniform", "--kappa", "0.001", "--seed", str(SEED), "--alpha", "0.1",
        ]

        assert cli(argv) == EXIT_OK
        spec = EpsilonSpec.uniform(1e-3)
        eps = draw_epsilons(spec, model_sample.n, np.random.default_rng(SEED))
        expected = build_band(model_sample, EPANECHNIKOV, FIXED, spec, 0.1, GridSpec(), eps=eps)
        _assert_same_band(read_band(out), expected)

    def test_test_command(self, dataset_path, model_sample, capsys):
        """Test the true curve is judged the same way by both paths."""
        curve_grid = np.linspace(-5, 6, 2001)
        curve_path = dataset_path.with_name("m0.csv")
        curve_path.write_text(
            "x,m0\n" + "".join(f"{format_float(x)},{format_float(m)}\n" for x, m in zip(curve_grid, regression_function(curve_grid)))
        )

        assert cli(["test", str(dataset_path), "--m0-file", str(curve_path)]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)

        def interpolated(x):
            return np.interp(x, curve_grid, regression_function(curve_grid))

        expected = max_deviation_test(
            model_sample, EPANECHNIKOV, FIXED, EpsilonSpec.zero(), interpolated, 0.05, GridSpec()
        )
        assert payload["tests"][0] == {"alpha": 0.05, **expected.to_dict()}


class TestBandBehaviour:
    """End-to-end properties of bands on model data."""

    def test_band_widths(self, model_sample):
        """Test both bands are finite on [0, 1] and the 95% band is wider than 90%."""
        narrow = build_band(model_sample, EPANECHNIKOV, FIXED, EpsilonSpec.zero(), 0.10)
        wide = build_band(model_sample, EPANECHNIKOV, FIXED, EpsilonSpec.zero(), 0.05)
        cc = build_complete_case_band(model_sample, EPANECHNIKOV, FIXED, 0.05)

        assert narrow.usable.all() and cc.usable.all()
        assert np.all(wide.half_width > narrow.half_width)
        assert wide.area() > narrow.area()
        assert cc.method == Method.COMPLETE_CASE and cc.beta is None
