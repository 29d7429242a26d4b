"""
Command-line interface for the MAR confidence band toolkit.

Usage:
    mar-bands band DATASET --out BAND.csv [--alpha A ...] [--delta D --beta B | --cv]
    mar-bands test DATASET (--m0 VALUE | --m0-file CURVE.csv) [--out RESULT.json]
    mar-bands simulate --out DIR [--n N ...] [--model A|B|none ...] [--reps R] [--eps zero|uniform|both]
    mar-bands constants [--kernel NAME] [--out CONSTANTS.json]

DATASET is a CSV with header x,y,delta. band writes BAND.csv (columns x,
mhat, fhat, sigma2, lower, upper, flags) and BAND.json (normalizing
constants); with several --alpha values each band gets an _alpha<value>
suffix. simulate writes table.csv, report.json and one ECDF table per
study cell into DIR.

Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.bands import BandError, GridSpec, build_band, max_deviation_test
from src.bandwidth import BandwidthSelectionError, CvConfig, select_bandwidths
from src.config import (
    BandwidthMode,
    ConfigurationError,
    LogFormat,
    LogLevel,
    RunConfig,
    Subcommand,
    get_config,
)
from src.dataset import DatasetError, read_dataset, write_dataset
from src.estimators import (
    BandwidthSpec,
    EpsilonSpec,
    EstimatorError,
    Sample,
    draw_epsilons,
)
from src.kernelmath import (
    KernelMathError,
    ParameterError,
    UnsupportedKernelError,
    d_n,
    get_kernel,
    kernel_constants,
)
from src.logger import StructuredLogger, configure_root_logger, generate_run_id, get_logger
from src.output_writer import OutputWriter, OutputWriterError, band_paths
from src.plotting import PlottingError, render_band_svg
from src.simharness import (
    MissingModel,
    SimConfig,
    SimulationError,
    Stream,
    apply_missingness,
    gen_sample,
    replication_rng,
    run_table,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

CONSTANTS_SIZES = (200, 500, 1000)
CONSTANTS_DELTAS = tuple(round(0.21 + 0.01 * i, 2) for i in range(13))
SIMULATE_ALPHAS = [0.10, 0.05]

_USAGE_ERRORS = (
    DatasetError,
    ConfigurationError,
    ParameterError,
    UnsupportedKernelError,
    EstimatorError,
    BandwidthSelectionError,
)
_RUNTIME_ERRORS = (BandError, SimulationError, OutputWriterError, PlottingError, KernelMathError)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", help="epanechnikov (default), biweight or triangular")
    parser.add_argument("--alpha", type=float, nargs="+", help="one or more levels in (0, 1)")
    parser.add_argument(
        "--grid", nargs=3, metavar=("LO", "HI", "COUNT"),
        help="evaluation grid (default: 0 1 200)",
    )
    parser.add_argument("--delta", type=float, help="h = n^-delta (default 0.30)")
    parser.add_argument("--beta", type=float, help="lambda = n^-beta (default 0.25)")
    parser.add_argument("--cv", action="store_true", help="select delta and beta by cross-validation")
    parser.add_argument("--kappa", type=float, help="half-width of the uniform perturbation (default 1e-3)")
    parser.add_argument("--seed", type=int, help="random seed for perturbations and simulation")


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser for the CLI."""
    parser = argparse.ArgumentParser(
        prog="mar-bands",
        description=(
            "Uniform confidence bands and maximal-deviation tests for kernel "
            "regression with responses missing at random."
        ),
    )
    parser.add_argument("--log-level", choices=[level.value for level in LogLevel])
    parser.add_argument("--log-format", choices=[fmt.value for fmt in LogFormat])
    sub = parser.add_subparsers(dest="command", required=True)

    band = sub.add_parser("band", help="build a confidence band from a dataset")
    band.add_argument("dataset", type=Path)
    band.add_argument("--out", type=Path, required=True, help="band CSV path")
    band.add_argument("--eps", choices=["zero", "uniform"], default="zero")
    band.add_argument("--plot", action="store_true", help="also write an SVG plot (needs matplotlib)")
    _add_common(band)

    test = sub.add_parser("test", help="maximal-deviation test of H0: m = m0")
    test.add_argument("dataset", type=Path)
    null = test.add_mutually_exclusive_group(required=True)
    null.add_argument("--m0", type=float, help="constant null curve")
    null.add_argument("--m0-file", type=Path, help="CSV with header x,m0; interpolated linearly")
    test.add_argument("--out", type=Path, help="result JSON path (default: stdout)")
    test.add_argument("--eps", choices=["zero", "uniform"], default="zero")
    _add_common(test)

    simulate = sub.add_parser("simulate", help="Monte Carlo coverage study")
    simulate.add_argument("--out", type=Path, required=True, help="output directory")
    simulate.add_argument("--n", type=int, nargs="+", help="sample sizes (default 1000)")
    simulate.add_argument("--model", nargs="+", help="missingness models: A, B, none (default B)")
    simulate.add_argument("--reps", type=int, help="replications per cell (default 300)")
    simulate.add_argument("--workers", type=int, help="worker threads (default 1)")
    simulate.add_argument("--eps", choices=["zero", "uniform", "both"], default="zero")
    simulate.add_argument(
        "--dump-sample", action="store_true",
        help="also write replication 0 of every (n, model) cell as a dataset CSV",
    )
    _add_common(simulate)

    constants = sub.add_parser("constants", help="kernel constants and d_n table")
    constants.add_argument("--kernel", default="epanechnikov")
    constants.add_argument("--out", type=Path, help="JSON path (default: stdout)")
    return parser


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """
    Merge parsed flags over the configured defaults.

    Raises:
        ConfigurationError: If the result is invalid
    """
    defaults = get_config()
    subcommand = Subcommand(args.command)
    estimator = replace(defaults.estimator)
    band = replace(defaults.band, alphas=list(defaults.band.alphas))
    bandwidth = replace(defaults.bandwidth)
    epsilon = replace(defaults.epsilon)
    simulation = replace(
        defaults.simulation,
        sizes=list(defaults.simulation.sizes),
        models=list(defaults.simulation.models),
    )

    if getattr(args, "kernel", None):
        estimator.kernel = args.kernel
    if getattr(args, "alpha", None):
        band.alphas = list(args.alpha)
    elif subcommand == Subcommand.SIMULATE:
        band.alphas = list(SIMULATE_ALPHAS)
    if getattr(args, "grid", None):
        lo, hi, count = args.grid
        try:
            band.grid_lo, band.grid_hi, band.grid_count = float(lo), float(hi), int(count)
        except ValueError:
            raise ConfigurationError("--grid expects LO HI COUNT, e.g. --grid 0 1 200") from None
    if getattr(args, "cv", False):
        if args.delta is not None or args.beta is not None:
            raise ConfigurationError("--cv cannot be combined with --delta/--beta")
        bandwidth.mode = BandwidthMode.CV
    else:
        if getattr(args, "delta", None) is not None:
            bandwidth.delta = args.delta
        if getattr(args, "beta", None) is not None:
            bandwidth.beta = args.beta
    if getattr(args, "eps", None):
        epsilon.kind = args.eps
    if getattr(args, "kappa", None) is not None:
        epsilon.kappa = args.kappa
    if getattr(args, "seed", None) is not None:
        simulation.seed = args.seed
    if getattr(args, "n", None):
        simulation.sizes = list(args.n)
    if getattr(args, "model", None):
        simulation.models = list(args.model)
    if getattr(args, "reps", None) is not None:
        simulation.reps = args.reps
    if getattr(args, "workers", None) is not None:
        simulation.workers = args.workers

    return RunConfig(
        subcommand=subcommand,
        estimator=estimator,
        band=band,
        bandwidth=bandwidth,
        epsilon=epsilon,
        simulation=simulation,
        dataset=getattr(args, "dataset", None),
        out=getattr(args, "out", None),
        plot=bool(getattr(args, "plot", False)),
    ).validate()


def _eps_spec(kind: str, kappa: float) -> EpsilonSpec:
    return EpsilonSpec.uniform(kappa) if kind == "uniform" else EpsilonSpec.zero()


def _grid_spec(config: RunConfig) -> GridSpec:
    return GridSpec(config.band.grid_lo, config.band.grid_hi, config.band.grid_count)


def _cv_config(config: RunConfig) -> CvConfig:
    bw = config.bandwidth
    grid = np.linspace(bw.grid_lo, bw.grid_hi, bw.grid_count)
    return CvConfig(delta_grid=[float(g) for g in grid], beta_margin=bw.beta_margin)


def _resolve_bandwidth(config: RunConfig, sample: Sample, eps: np.ndarray) -> BandwidthSpec:
    if config.bandwidth.mode == BandwidthMode.CV:
        kernel = get_kernel(config.estimator.kernel)
        return select_bandwidths(sample, kernel, eps, _cv_config(config))
    return BandwidthSpec(delta=config.bandwidth.delta, beta=config.bandwidth.beta)


def _prepare(config: RunConfig) -> Tuple[Sample, EpsilonSpec, np.ndarray, BandwidthSpec]:
    """Dataset, perturbations drawn from the seed, and bandwidth exponents."""
    assert config.dataset is not None
    sample = read_dataset(config.dataset)
    spec = _eps_spec(config.epsilon.kind, config.epsilon.kappa)
    eps = draw_epsilons(spec, sample.n, np.random.default_rng(config.simulation.seed))
    return sample, spec, eps, _resolve_bandwidth(config, sample, eps)


def _alpha_path(out: Path, alpha: float, several: bool) -> Path:
    csv_path, _ = band_paths(out)
    if not several:
        return csv_path
    return csv_path.with_name(f"{csv_path.stem}_alpha{alpha:g}{csv_path.suffix}")


def cmd_band(
    config: RunConfig,
    writer: Optional[OutputWriter] = None,
    logger: Optional[StructuredLogger] = None,
) -> int:
    """Build the band(s) and write CSV, JSON header and optional SVG."""
    assert config.out is not None
    writer = writer or OutputWriter()
    logger = logger or get_logger("cli")
    sample, spec, eps, bw = _prepare(config)
    kernel = get_kernel(config.estimator.kernel)
    several = len(config.band.alphas) > 1
    for alpha in config.band.alphas:
        band = build_band(
            sample, kernel, bw, spec, alpha, _grid_spec(config),
            eps=eps, p_min=config.estimator.p_min, sigma2_min=config.estimator.sigma2_min, logger=logger,
        )
        csv_path, json_path = writer.write_band(band, _alpha_path(config.out, alpha, several))
        if config.plot:
            writer.write_text(csv_path.with_suffix(".svg"), render_band_svg(band))
        logger.info(
            "Band written", path=str(csv_path), header=str(json_path),
            alpha=alpha, delta=bw.delta, beta=bw.beta, area=band.area(),
        )
    return EXIT_OK


def load_null_curve(m0: Optional[float], m0_file: Optional[Path]) -> Callable[[np.ndarray], np.ndarray]:
    """
    Null curve from a constant or from a CSV of (x, m0) points.

    Raises:
        DatasetError: If the curve file is unreadable
    """
    if m0_file is None:
        if m0 is None:
            raise ConfigurationError("test requires --m0 or --m0-file")
        value = float(m0)
        return lambda x: np.full(np.shape(x), value, dtype=float)

    points: List[Tuple[float, float]] = []
    try:
        with open(m0_file, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or [h.strip().lower() for h in header] != ["x", "m0"]:
                raise DatasetError(f"{m0_file}: expected header x,m0")
            for row_number, row in enumerate(reader, start=1):
                if not row:
                    continue
                try:
                    points.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    raise DatasetError(f"cannot parse null curve point {row}", row_number) from None
    except OSError as exc:
        raise DatasetError(f"cannot read {m0_file}: {exc}") from exc
    if len(points) < 2:
        raise DatasetError(f"{m0_file}: null curve needs at least 2 points")
    points.sort()
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return lambda x: np.interp(x, xs, ys)


def cmd_test(
    config: RunConfig,
    m0: Callable[[np.ndarray], np.ndarray],
    writer: Optional[OutputWriter] = None,
    logger: Optional[StructuredLogger] = None,
) -> int:
    """Run the maximal-deviation test at every alpha; JSON to --out or stdout."""
    sample, spec, eps, bw = _prepare(config)
    kernel = get_kernel(config.estimator.kernel)
    results = []
    for alpha in config.band.alphas:
        result = max_deviation_test(
            sample, kernel, bw, spec, m0, alpha, _grid_spec(config),
            eps=eps, p_min=config.estimator.p_min, sigma2_min=config.estimator.sigma2_min, logger=logger,
        )
        results.append({"alpha": alpha, **result.to_dict()})
    payload: Dict[str, object] = {
        "n": sample.n,
        "kernel": config.estimator.kernel,
        "delta": bw.delta,
        "beta": bw.beta,
        "tests": results,
    }
    if config.out is None:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        (writer or OutputWriter()).write_json(config.out, payload)
    return EXIT_OK


def _sim_base(config: RunConfig) -> SimConfig:
    bandwidth = None
    if config.bandwidth.mode == BandwidthMode.FIXED:
        bandwidth = BandwidthSpec(delta=config.bandwidth.delta, beta=config.bandwidth.beta)
    return SimConfig(
        n=config.simulation.sizes[0],
        reps=config.simulation.reps,
        seed=config.simulation.seed,
        kernel=config.estimator.kernel,
        alphas=tuple(config.band.alphas),
        grid=_grid_spec(config),
        bandwidth=bandwidth,
        cv=_cv_config(config),
        p_min=config.estimator.p_min,
        sigma2_min=config.estimator.sigma2_min,
        workers=config.simulation.workers,
    )


def cmd_simulate(
    config: RunConfig,
    writer: Optional[OutputWriter] = None,
    dump_sample: bool = False,
    logger: Optional[StructuredLogger] = None,
) -> int:
    """Run the study grid and write table.csv, report.json and ECDF tables."""
    assert config.out is not None
    writer = writer or OutputWriter()
    kind, kappa = config.epsilon.kind, config.epsilon.kappa
    kinds = ["zero", "uniform"] if kind == "both" else [kind]
    eps_specs = [_eps_spec(k, kappa) for k in kinds]

    logger = logger or get_logger("cli")
    table = run_table(
        config.simulation.sizes, config.simulation.models, eps_specs, _sim_base(config), logger=logger
    )

    out_dir = config.out
    writer.write_rows(out_dir / "table.csv", table.rows())
    writer.write_json(out_dir / "report.json", {"studies": [r.to_dict() for r in table.reports]})
    for report in table.reports:
        cell = f"n{report.config.n}_{report.config.model.value}_{report.config.eps.kind.value}"
        diagnostics = report.ecdf
        first = next(iter(diagnostics.values()))
        writer.write_ecdf(
            out_dir / f"ecdf_{cell}.csv",
            first.ecdf_x,
            {method: diag.ecdf_y for method, diag in diagnostics.items()},
        )
        if report.failures:
            logger.warning("Study cell had failed replications", cell=cell, failures=report.failures)

    if dump_sample:
        seed = config.simulation.seed
        for n in config.simulation.sizes:
            for model_name in config.simulation.models:
                model = MissingModel.parse(model_name)
                latent = gen_sample(n, replication_rng(seed, 0, Stream.DATA))
                sample = apply_missingness(latent, model, replication_rng(seed, 0, Stream.MISSINGNESS))
                write_dataset(sample, out_dir / f"sample_n{n}_{model.value}.csv", writer)
    return EXIT_OK


def cmd_constants(kernel_name: str, out: Optional[Path] = None, writer: Optional[OutputWriter] = None) -> int:
    """Kernel constants and the d_n table as JSON."""
    kernel = get_kernel(kernel_name)
    consts = kernel_constants(kernel)
    payload = {
        "kernel": kernel.name.value,
        **consts.to_dict(),
        "d_n": [
            {"n": n, "delta": delta, "d_n": d_n(n, delta, consts)}
            for n in CONSTANTS_SIZES
            for delta in CONSTANTS_DELTAS
        ],
    }
    if out is None:
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        (writer or OutputWriter()).write_json(out, payload)
    return EXIT_OK


def _dispatch(args: argparse.Namespace, logger: Optional[StructuredLogger] = None) -> int:
    if args.command == Subcommand.CONSTANTS.value:
        return cmd_constants(args.kernel, args.out)
    config = run_config_from_args(args)
    if config.subcommand == Subcommand.BAND:
        return cmd_band(config, logger=logger)
    if config.subcommand == Subcommand.TEST:
        return cmd_test(config, load_null_curve(args.m0, args.m0_file), logger=logger)
    return cmd_simulate(config, dump_sample=args.dump_sample, logger=logger)


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Parse command-line arguments and run one subcommand.

    Args:
        argv: Optional list of arguments. If None, uses sys.argv[1:].

    Returns:
        Exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    ambient = get_config().logging
    level = LogLevel(args.log_level) if args.log_level else ambient.level
    fmt = LogFormat(args.log_format) if args.log_format else ambient.format
    configure_root_logger(level, fmt)

    run_id = generate_run_id()
    logger = get_logger("cli").with_context(run_id=run_id)
    logger.log_run_started(args.command, run_id, {"argv": list(argv) if argv is not None else sys.argv[1:]})
    started = time.perf_counter()
    error_type: Optional[str] = None
    try:
        exit_code = _dispatch(args, logger)
    except _USAGE_ERRORS as exc:
        error_type = type(exc).__name__
        print(f"error: {exc}", file=sys.stderr)
        exit_code = EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        error_type = type(exc).__name__
        print(f"error: {exc}", file=sys.stderr)
        exit_code = EXIT_RUNTIME
    logger.log_run_finished(
        args.command, run_id, exit_code, (time.perf_counter() - started) * 1000, error_type
    )
    return exit_code


def main() -> None:
    """Entry point for console_scripts."""
    try:
        exit_code = cli()
    except KeyboardInterrupt:  # pragma: no cover - manual interruption
        exit_code = EXIT_RUNTIME
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
