"""
Configuration Manager for the MAR confidence band toolkit.

Handles:
- Optional .env loading (ambient logging settings only)
- Estimator, band, bandwidth, epsilon and simulation defaults
- Per-invocation run configuration built from CLI arguments
- Runtime configuration validation

Statistical settings never come from the environment; only LOG_LEVEL and
LOG_FORMAT are read there.
"""

import os
from pathlib import Path
from dataclasses import dataclass, field
from typing import Optional, List
from enum import Enum

from dotenv import load_dotenv


# Admissible bandwidth exponents: 1/5 < beta < delta < 1/3.
EXPONENT_LOWER = 0.2
EXPONENT_UPPER = 1.0 / 3.0


class LogLevel(Enum):
    """Supported log levels."""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class LogFormat(Enum):
    """Supported log formats."""
    JSON = "json"
    TEXT = "text"


class BandwidthMode(Enum):
    """How the bandwidth exponents are chosen."""
    FIXED = "fixed"
    CV = "cv"


class Subcommand(Enum):
    """CLI subcommands."""
    BAND = "band"
    TEST = "test"
    SIMULATE = "simulate"
    CONSTANTS = "constants"


class ConfigurationError(Exception):
    """Raised when configuration is invalid or missing."""
    pass


def check_exponents(delta: float, beta: float) -> None:
    """Raise ConfigurationError unless 1/5 < beta < delta < 1/3."""
    if not (EXPONENT_LOWER < beta < delta < EXPONENT_UPPER):
        raise ConfigurationError(
            f"bandwidth exponents must satisfy 1/5 < beta < delta < 1/3 "
            f"(got delta={delta}, beta={beta}); try --delta 0.30 --beta 0.25"
        )


@dataclass
class EstimatorConfig:
    """Estimator settings shared by every band."""
    kernel: str = "epanechnikov"
    p_min: float = 0.05
    sigma2_min: float = 1e-8

    def validate(self) -> None:
        """Validate estimator configuration.

        Raises:
            ConfigurationError: If a floor is out of range
        """
        if not self.kernel:
            raise ConfigurationError("kernel name cannot be empty")
        if not (0.0 < self.p_min <= 1.0):
            raise ConfigurationError("p_min must lie in (0, 1]")
        if self.sigma2_min <= 0.0:
            raise ConfigurationError("sigma2_min must be positive")


@dataclass
class BandConfig:
    """Confidence level(s) and evaluation grid."""
    alphas: List[float] = field(default_factory=lambda: [0.05])
    grid_lo: float = 0.0
    grid_hi: float = 1.0
    grid_count: int = 200

    def validate(self) -> None:
        """Validate band configuration.

        Raises:
            ConfigurationError: If alpha or the grid is invalid
        """
        if not self.alphas:
            raise ConfigurationError("at least one alpha level is required")
        for alpha in self.alphas:
            if not (0.0 < alpha < 1.0):
                raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
        if not self.grid_lo < self.grid_hi:
            raise ConfigurationError("grid lower bound must be below the upper bound")
        if self.grid_count < 2:
            raise ConfigurationError("grid needs at least 2 points")


@dataclass
class BandwidthConfig:
    """Bandwidth exponents or the cross-validation grid that picks them."""
    mode: BandwidthMode = BandwidthMode.FIXED
    delta: float = 0.30
    beta: float = 0.25
    beta_margin: float = 0.01
    grid_lo: float = 0.205
    grid_hi: float = 0.330
    grid_count: int = 14

    def validate(self) -> None:
        """Validate bandwidth configuration.

        Raises:
            ConfigurationError: If the exponents leave 1/5 < beta < delta < 1/3
        """
        if self.mode == BandwidthMode.FIXED:
            check_exponents(self.delta, self.beta)
        if self.beta_margin <= 0.0:
            raise ConfigurationError("beta_margin must be positive")
        if self.grid_count < 1:
            raise ConfigurationError("CV grid needs at least one exponent")
        if not (EXPONENT_LOWER < self.grid_lo <= self.grid_hi < EXPONENT_UPPER):
            raise ConfigurationError("CV grid must lie strictly inside (1/5, 1/3)")


@dataclass
class EpsilonConfig:
    """Artificial perturbation added to the weighted responses."""
    kind: str = "zero"
    kappa: float = 1e-3

    def validate(self) -> None:
        """Validate epsilon configuration."""
        if self.kind not in ("zero", "uniform", "both"):
            raise ConfigurationError("eps must be one of: zero, uniform, both")
        if self.kappa < 0.0:
            raise ConfigurationError("kappa cannot be negative")


@dataclass
class SimulationConfig:
    """Monte Carlo study settings."""
    sizes: List[int] = field(default_factory=lambda: [1000])
    models: List[str] = field(default_factory=lambda: ["B"])
    reps: int = 300
    seed: int = 20190101
    workers: int = 1

    def validate(self) -> None:
        """Validate simulation configuration."""
        if self.reps < 1:
            raise ConfigurationError("reps must be at least 1")
        if not self.sizes or min(self.sizes) < 20:
            raise ConfigurationError("every sample size must be at least 20")
        for model in self.models:
            if model.upper() not in ("A", "B", "NONE"):
                raise ConfigurationError(f"unknown missingness model: {model}")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigurationError("workers must be positive")


@dataclass
class LoggingConfig:
    """Logging configuration settings."""
    level: LogLevel = LogLevel.INFO
    format: LogFormat = LogFormat.JSON

    def validate(self) -> None:
        """Validate logging configuration."""
        # Enum validation is handled during construction
        pass


@dataclass
class RunConfig:
    """
    One CLI invocation, assembled from parsed arguments.

    Attributes:
        subcommand: Which CLI action to run
        estimator: Kernel and floors
        band: Alpha levels and grid
        bandwidth: Fixed exponents or CV grid
        epsilon: Perturbation spec
        simulation: Study settings (simulate only)
        dataset: Input CSV path (band/test)
        out: Output base path; None writes to stdout where supported
    """
    subcommand: Subcommand
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    band: BandConfig = field(default_factory=BandConfig)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    epsilon: EpsilonConfig = field(default_factory=EpsilonConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    dataset: Optional[Path] = None
    out: Optional[Path] = None
    plot: bool = False

    def validate(self) -> "RunConfig":
        """Validate every section relevant to the subcommand.

        Returns:
            Self for method chaining.

        Raises:
            ConfigurationError: If any setting is invalid.
        """
        self.estimator.validate()
        if self.subcommand in (Subcommand.BAND, Subcommand.TEST):
            if self.dataset is None:
                raise ConfigurationError(f"{self.subcommand.value} requires a dataset path")
            if self.subcommand == Subcommand.BAND and self.out is None:
                raise ConfigurationError("band requires --out")
            self.band.validate()
            self.bandwidth.validate()
            self.epsilon.validate()
            if self.epsilon.kind == "both":
                raise ConfigurationError("eps 'both' is only meaningful for simulate")
        elif self.subcommand == Subcommand.SIMULATE:
            if self.out is None:
                raise ConfigurationError("simulate requires --out")
            self.band.validate()
            self.bandwidth.validate()
            self.epsilon.validate()
            self.simulation.validate()
        return self


class Config:
    """
    Main configuration class.

    Loads ambient settings from the environment and holds the default
    sections used when a CLI flag is not given.

    Usage:
        config = Config()
        config.load()
        config.validate()

        print(config.estimator.p_min)
        print(config.band.grid_count)
    """

    def __init__(self, env_file: Optional[Path] = None):
        """Initialize configuration manager.

        Args:
            env_file: Optional path to .env file. If not provided,
                     will look for .env in the current directory.
        """
        self._env_file = env_file
        self._loaded = False

        self.estimator: EstimatorConfig = EstimatorConfig()
        self.band: BandConfig = BandConfig()
        self.bandwidth: BandwidthConfig = BandwidthConfig()
        self.epsilon: EpsilonConfig = EpsilonConfig()
        self.simulation: SimulationConfig = SimulationConfig()
        self.logging: LoggingConfig = LoggingConfig()

    def load(self) -> "Config":
        """Load ambient configuration from environment variables.

        Returns:
            Self for method chaining.
        """
        if self._env_file:
            load_dotenv(self._env_file)
        else:
            load_dotenv()

        log_level_str = os.getenv("LOG_LEVEL", "INFO").upper()
        log_format_str = os.getenv("LOG_FORMAT", "json").lower()

        try:
            log_level = LogLevel[log_level_str]
        except KeyError:
            log_level = LogLevel.INFO

        try:
            log_format = LogFormat(log_format_str)
        except ValueError:
            log_format = LogFormat.JSON

        self.logging = LoggingConfig(level=log_level, format=log_format)

        self._loaded = True
        return self

    def validate(self) -> "Config":
        """Validate all configuration settings.

        Returns:
            Self for method chaining.

        Raises:
            ConfigurationError: If any configuration is invalid.
        """
        if not self._loaded:
            raise ConfigurationError("Configuration not loaded. Call load() first.")

        self.estimator.validate()
        self.band.validate()
        self.bandwidth.validate()
        self.epsilon.validate()
        self.simulation.validate()
        self.logging.validate()

        return self

    def __repr__(self) -> str:
        return (
            f"Config(loaded={self._loaded}, kernel={self.estimator.kernel}, "
            f"log_level={self.logging.level.value})"
        )


# Global configuration instance
_config: Optional[Config] = None


def get_config(reload: bool = False) -> Config:
    """Get the global configuration instance.

    Args:
        reload: If True, reload configuration from environment.

    Returns:
        Loaded configuration.
    """
    global _config

    if _config is None or reload:
        _config = Config()
        _config.load()

    return _config


def init_config(env_file: Optional[Path] = None) -> Config:
    """Initialize and validate configuration.

    Args:
        env_file: Optional path to .env file.

    Returns:
        Loaded and validated configuration.

    Raises:
        ConfigurationError: If configuration is invalid.
    """
    global _config

    _config = Config(env_file)
    _config.load()
    _config.validate()

    return _config
