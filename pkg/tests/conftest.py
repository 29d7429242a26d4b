"""
Pytest configuration and shared fixtures for the test suite.

This module provides:
- Reset of the configuration singleton
- Small deterministic samples
- Environment helpers
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))


@pytest.fixture(autouse=True)
def reset_global_state():
    """Reset global state between tests."""
    import src.config as config_module
    config_module._config = None

    yield

    config_module._config = None


@pytest.fixture
def mock_env_vars():
    """Provide a setter that replaces the environment for one test."""
    original_env = os.environ.copy()

    def set_vars(vars_dict):
        os.environ.clear()
        os.environ.update(vars_dict)

    yield set_vars

    os.environ.clear()
    os.environ.update(original_env)


@pytest.fixture
def rng():
    """Fixed-seed generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def complete_sample(rng):
    """n=300 sample from a smooth curve with every response observed."""
    from src.estimators import Sample

    x = rng.uniform(-0.5, 1.5, size=300)
    y = np.sin(2 * np.pi * x) + 0.3 * rng.standard_normal(300)
    return Sample.complete(x, y)


@pytest.fixture
def mar_sample(rng):
    """n=500 sample with responses missing at random (p(x) = logistic(1 + x))."""
    from src.estimators import Sample

    x = rng.normal(0.5, 1.0, size=500)
    y = np.cos(np.pi * x) + 0.5 * rng.standard_normal(500)
    p = 1.0 / (1.0 + np.exp(-(1.0 + x)))
    delta = (rng.random(500) < p).astype(int)
    return Sample(x, np.where(delta == 1, y, np.nan), delta)


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV file under tmp_path and return its path."""
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


# Markers for different test categories
def pytest_configure(config):
    """Configure pytest markers."""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
