"""
MAR confidence bands.

Uniform confidence bands and maximal-deviation tests for Nadaraya-Watson
regression when responses are missing at random, with a Monte Carlo
coverage harness.

Modules:
    config: Configuration management
    logger: Structured logging utilities
    kernelmath: Kernels, limit constants, d_n and the Gumbel law
    estimators: Complete-case, selection-probability and weighted estimators
    bandwidth: Cross-validated bandwidth exponents
    bands: Bands, deviation statistics and the maximal-deviation test
    simharness: Coverage study
    dataset, output_writer, plotting, cli: Files and command line
"""

from src.config import (
    Config,
    ConfigurationError,
    RunConfig,
    get_config,
    init_config,
)
from src.logger import (
    StructuredLogger,
    get_logger,
    generate_run_id,
)
from src.kernelmath import (
    BIWEIGHT,
    EPANECHNIKOV,
    TRIANGULAR,
    Kernel,
    KernelConstants,
    ParameterError,
    UnsupportedKernelError,
    d_n,
    get_kernel,
    gumbel_cdf,
    gumbel_quantile,
    kernel_constants,
)
from src.estimators import (
    BandwidthSpec,
    EpsilonSpec,
    EstimatorError,
    Sample,
    complete_case_regress,
    estimate_selection_prob,
    ipw_regress,
    ipw_variance,
    kde,
    nw_regress,
)
from src.bandwidth import (
    BandwidthSelectionError,
    CvConfig,
    select_bandwidths,
    select_beta,
    select_delta,
)
from src.bands import (
    BandError,
    BandResult,
    DeviationStat,
    GridSpec,
    TestResult,
    build_band,
    build_complete_case_band,
    build_full_data_band,
    complete_case_stat,
    deviation_stat,
    max_deviation_test,
)
from src.simharness import (
    MissingModel,
    SimConfig,
    SimReport,
    SimulationError,
    run_study,
    run_table,
    uniformity_diagnostic,
)
from src.dataset import DatasetError, read_dataset, write_dataset

__version__ = "1.0.0"
__all__ = [
    # Config
    "Config",
    "ConfigurationError",
    "RunConfig",
    "get_config",
    "init_config",
    # Logger
    "StructuredLogger",
    "get_logger",
    "generate_run_id",
    # Kernel math
    "BIWEIGHT",
    "EPANECHNIKOV",
    "TRIANGULAR",
    "Kernel",
    "KernelConstants",
    "ParameterError",
    "UnsupportedKernelError",
    "d_n",
    "get_kernel",
    "gumbel_cdf",
    "gumbel_quantile",
    "kernel_constants",
    # Estimators
    "BandwidthSpec",
    "EpsilonSpec",
    "EstimatorError",
    "Sample",
    "complete_case_regress",
    "estimate_selection_prob",
    "ipw_regress",
    "ipw_variance",
    "kde",
    "nw_regress",
    # Bandwidth
    "BandwidthSelectionError",
    "CvConfig",
    "select_bandwidths",
    "select_beta",
    "select_delta",
    # Bands
    "BandError",
    "BandResult",
    "DeviationStat",
    "GridSpec",
    "TestResult",
    "build_band",
    "build_complete_case_band",
    "build_full_data_band",
    "complete_case_stat",
    "deviation_stat",
    "max_deviation_test",
    # Simulation
    "MissingModel",
    "SimConfig",
    "SimReport",
    "SimulationError",
    "run_study",
    "run_table",
    "uniformity_diagnostic",
    # Files
    "DatasetError",
    "read_dataset",
    "write_dataset",
]
