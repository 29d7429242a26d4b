"""
Monte Carlo coverage study for the MAR confidence bands.

Data model:
    X ~ N(0.5, 1),  Y = sin(pi (X^4 + exp(cos X))) + sigma(X) Z,
    sigma^2(x) = 1 + exp(-(x + 2)),  Z ~ N(0, 1)

Missingness:
    Model A  p(x) = logistic(1 - 2x)    (about half the responses missing)
    Model B  p(x) = logistic(1 + 0.2x)  (about a quarter missing)

Every replication draws from its own generators derived from
(seed, replication index, stream), so results do not depend on the order
in which replications run or on the number of workers.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

from src.bands import (
    BandError,
    GridSpec,
    Method,
    build_bands,
    deviation_stat,
    fit_complete_case,
    fit_ipw,
)
from src.bandwidth import BandwidthSelectionError, CvConfig, select_bandwidths
from src.estimators import (
    BandwidthSpec,
    EpsilonSpec,
    EstimatorError,
    P_MIN,
    SIGMA2_MIN,
    Sample,
    draw_epsilons,
    ipw_regress,
)
from src.kernelmath import KernelMathError, get_kernel, kernel_constants
from src.logger import StructuredLogger, get_logger

__all__ = [
    "SimulationError",
    "MissingModel",
    "Stream",
    "selection_probability",
    "regression_function",
    "noise_variance",
    "LatentSample",
    "replication_rng",
    "gen_sample",
    "apply_missingness",
    "marginal_missing_rate",
    "SimConfig",
    "ReplicationResult",
    "run_replication",
    "ReplicationPool",
    "SimReport",
    "run_study",
    "UniformityDiagnostic",
    "uniformity_diagnostic",
    "StudyTable",
    "run_table",
]

ECDF_POINTS = 101
METHODS = (Method.IPW, Method.COMPLETE_CASE)

# Errors that fail a single replication without stopping the study.
_REPLICATION_ERRORS = (BandError, BandwidthSelectionError, EstimatorError, KernelMathError)


class SimulationError(Exception):
    """Raised when a study cannot be configured or produces no results."""
    pass


class MissingModel(Enum):
    """Selection-probability models; NONE observes every response."""
    A = "A"
    B = "B"
    NONE = "none"

    @classmethod
    def parse(cls, value: Union[str, "MissingModel"]) -> "MissingModel":
        if isinstance(value, MissingModel):
            return value
        text = str(value).strip()
        for member in cls:
            if member.value.lower() == text.lower():
                return member
        raise SimulationError(f"unknown missingness model '{value}'; expected A, B or none")


class Stream(Enum):
    """Independent random streams within one replication."""
    DATA = 0
    MISSINGNESS = 1
    EPSILON = 2


def selection_probability(model: MissingModel, x: np.ndarray) -> np.ndarray:
    """True P(delta = 1 | X = x) under the model."""
    x = np.asarray(x, dtype=float)
    if model == MissingModel.A:
        return special.expit(1.0 - 2.0 * x)
    if model == MissingModel.B:
        return special.expit(1.0 + 0.2 * x)
    return np.ones_like(x)


def regression_function(x: np.ndarray) -> np.ndarray:
    """m(x) = sin(pi (x^4 + exp(cos x)))."""
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * (x ** 4 + np.exp(np.cos(x))))


def noise_variance(x: np.ndarray) -> np.ndarray:
    """sigma^2(x) = 1 + exp(-(x + 2))."""
    return 1.0 + np.exp(-(np.asarray(x, dtype=float) + 2.0))


@dataclass(frozen=True, eq=False)
class LatentSample:
    """A generated sample before masking, with the true curve values kept."""
    x: np.ndarray
    y: np.ndarray
    m: np.ndarray
    sigma: np.ndarray

    @property
    def n(self) -> int:
        return int(self.x.size)

    def complete(self) -> Sample:
        return Sample.complete(self.x, self.y)


def replication_rng(seed: int, replication: int, stream: Stream) -> np.random.Generator:
    """Generator for one stream of one replication."""
    sequence = np.random.SeedSequence(seed, spawn_key=(replication, stream.value))
    return np.random.Generator(np.random.PCG64(sequence))


def gen_sample(n: int, rng: np.random.Generator) -> LatentSample:
    """Draw n records from the regression model."""
    if n < 1:
        raise SimulationError("n must be at least 1")
    x = rng.normal(0.5, 1.0, size=n)
    z = rng.standard_normal(size=n)
    m = regression_function(x)
    sigma = np.sqrt(noise_variance(x))
    return LatentSample(x=x, y=m + sigma * z, m=m, sigma=sigma)


def apply_missingness(latent: LatentSample, model: MissingModel, rng: np.random.Generator) -> Sample:
    """Mask responses with independent Bernoulli(p(X_i)) indicators."""
    model = MissingModel.parse(model)
    p = selection_probability(model, latent.x)
    delta = (rng.random(latent.n) < p).astype(np.int8)
    y = np.where(delta == 1, latent.y, np.nan)
    return Sample(latent.x, y, delta)


def marginal_missing_rate(
    model: MissingModel,
    draws: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Share of missing responses over X ~ N(0.5, 1), by simulation."""
    rng = rng if rng is not None else np.random.default_rng(0)
    x = rng.normal(0.5, 1.0, size=draws)
    observed = rng.random(draws) < selection_probability(MissingModel.parse(model), x)
    return 1.0 - float(np.mean(observed))


@dataclass
class SimConfig:
    """
    One cell of the study: sample size, missingness model and perturbation.

    Attributes:
        bandwidth: Fixed exponents; None selects them by cross-validation in
            every replication
    """
    n: int
    model: MissingModel = MissingModel.B
    reps: int = 300
    seed: int = 20190101
    kernel: str = "epanechnikov"
    eps: EpsilonSpec = field(default_factory=EpsilonSpec.zero)
    alphas: Tuple[float, ...] = (0.10,)
    grid: GridSpec = field(default_factory=GridSpec)
    bandwidth: Optional[BandwidthSpec] = field(
        default_factory=lambda: BandwidthSpec(delta=0.30, beta=0.25)
    )
    cv: CvConfig = field(default_factory=CvConfig)
    p_min: float = P_MIN
    sigma2_min: float = SIGMA2_MIN
    workers: int = 1

    def validate(self) -> "SimConfig":
        """
        Raises:
            SimulationError: If any setting is out of range
        """
        self.model = MissingModel.parse(self.model)
        if self.reps < 1:
            raise SimulationError("reps must be at least 1")
        if self.n < 20:
            raise SimulationError("n must be at least 20")
        if not self.alphas:
            raise SimulationError("at least one alpha level is required")
        for alpha in self.alphas:
            if not (0.0 < alpha < 1.0):
                raise SimulationError(f"alpha must lie in (0, 1), got {alpha}")
        if self.workers < 1:
            raise SimulationError("workers must be positive")
        try:
            get_kernel(self.kernel)
        except KernelMathError as exc:
            raise SimulationError(str(exc)) from exc
        return self

    @property
    def bandwidth_label(self) -> str:
        if self.bandwidth is None:
            return "cv"
        return f"fixed({self.bandwidth.delta:g},{self.bandwidth.beta:g})"


@dataclass(frozen=True)
class ReplicationResult:
    """Scores of one replication; error is set when it failed."""
    index: int
    covered: Dict[str, Dict[float, bool]] = field(default_factory=dict)
    area: Dict[str, Dict[float, float]] = field(default_factory=dict)
    u: Optional[float] = None
    v: Optional[float] = None
    delta: Optional[float] = None
    beta: Optional[float] = None
    missing_rate: Optional[float] = None
    ipw_oracle_gap: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_replication(config: SimConfig, index: int) -> ReplicationResult:
    """
    Generate, mask, fit and score replication `index`.

    Raises:
        BandError, BandwidthSelectionError, EstimatorError: On a degenerate draw
    """
    kernel = get_kernel(config.kernel)
    consts = kernel_constants(kernel)
    latent = gen_sample(config.n, replication_rng(config.seed, index, Stream.DATA))
    sample = apply_missingness(latent, config.model, replication_rng(config.seed, index, Stream.MISSINGNESS))
    eps = draw_epsilons(config.eps, sample.n, replication_rng(config.seed, index, Stream.EPSILON))

    bw = config.bandwidth or select_bandwidths(sample, kernel, eps, config.cv)
    grid = config.grid.points()

    ipw_fit = fit_ipw(
        sample, kernel, bw, eps, grid,
        p_min=config.p_min, sigma2_min=config.sigma2_min, eps_bound=config.eps.bound,
    )
    cc_fit = fit_complete_case(sample, kernel, bw, grid, config.sigma2_min)

    covered: Dict[str, Dict[float, bool]] = {}
    area: Dict[str, Dict[float, float]] = {}
    for method, fit in ((Method.IPW, ipw_fit), (Method.COMPLETE_CASE, cc_fit)):
        bands = build_bands(fit, kernel, bw.delta, config.alphas, beta=bw.beta)
        covered[method] = {b.alpha: b.contains(regression_function) for b in bands}
        area[method] = {b.alpha: b.area() for b in bands}

    def true_p(x: np.ndarray) -> np.ndarray:
        return selection_probability(config.model, x)

    oracle = ipw_regress(sample, kernel, ipw_fit.h, true_p, eps, grid)
    usable = ipw_fit.usable

    return ReplicationResult(
        index=index,
        covered=covered,
        area=area,
        u=deviation_stat(ipw_fit, regression_function, bw.delta, consts).u,
        v=deviation_stat(cc_fit, regression_function, bw.delta, consts).u,
        delta=bw.delta,
        beta=bw.beta,
        missing_rate=1.0 - sample.n_observed / sample.n,
        ipw_oracle_gap=float(np.max(np.abs(ipw_fit.mhat - oracle)[usable])),
    )


class ReplicationPool:
    """Runs replications on a thread pool and returns them in index order."""

    def __init__(self, workers: int = 1, logger: Optional[StructuredLogger] = None):
        if workers < 1:
            raise SimulationError("workers must be positive")
        self._workers = workers
        self._logger = logger or get_logger("simharness")
        self._lock = threading.Lock()
        self._completed = 0

    def _run_one(self, config: SimConfig, index: int) -> ReplicationResult:
        try:
            return run_replication(config, index)
        except _REPLICATION_ERRORS as exc:
            self._logger.warning(
                "Replication failed",
                replication=index,
                error_type=type(exc).__name__,
                error=str(exc),
            )
            return ReplicationResult(index=index, error=f"{type(exc).__name__}: {exc}")

    def _on_done(self, total: int, future: Future) -> None:
        with self._lock:
            self._completed += 1
            done = self._completed
        if done == total or done % 50 == 0:
            self._logger.debug("Replication progress", completed=done, total=total)

    def run(self, config: SimConfig) -> List[ReplicationResult]:
        self._completed = 0
        indices = range(config.reps)
        if self._workers == 1:
            return [self._run_one(config, i) for i in indices]
        with ThreadPoolExecutor(max_workers=self._workers) as executor:
            futures = []
            for i in indices:
                future = executor.submit(self._run_one, config, i)
                future.add_done_callback(lambda f: self._on_done(config.reps, f))
                futures.append(future)
            return [f.result() for f in futures]


@dataclass(frozen=True, eq=False)
class UniformityDiagnostic:
    """KS distance from Unif[0, 1] and the ECDF on 101 equally spaced points."""
    ks_distance: float
    ecdf_x: np.ndarray
    ecdf_y: np.ndarray


def uniformity_diagnostic(u_values: Sequence[float]) -> UniformityDiagnostic:
    """
    Raises:
        SimulationError: If u_values is empty
    """
    u = np.sort(np.asarray(u_values, dtype=float))
    if u.size == 0:
        raise SimulationError("uniformity diagnostic needs at least one value")
    ks = float(stats.kstest(u, "uniform").statistic)
    points = np.linspace(0.0, 1.0, ECDF_POINTS)
    ecdf = np.searchsorted(u, points, side="right") / u.size
    return UniformityDiagnostic(ks_distance=ks, ecdf_x=points, ecdf_y=ecdf)


@dataclass(eq=False)
class SimReport:
    """Aggregated results of one study cell."""
    config: SimConfig
    u_values: np.ndarray
    v_values: np.ndarray
    coverage: Dict[str, Dict[float, float]]
    mean_area: Dict[str, Dict[float, float]]
    ks_distance: Dict[str, float]
    ecdf: Dict[str, UniformityDiagnostic]
    successes: int
    failures: int
    failure_messages: List[str]
    mean_missing_rate: float
    max_ipw_oracle_gap: float
    bandwidths: List[Tuple[float, float]]

    @property
    def eps_label(self) -> str:
        return self.config.eps.label

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready summary; alpha keys are rendered with repr."""
        def by_alpha(table: Dict[str, Dict[float, float]]) -> Dict[str, Dict[str, float]]:
            return {
                method: {repr(alpha): value for alpha, value in values.items()}
                for method, values in table.items()
            }

        return {
            "n": self.config.n,
            "model": self.config.model.value,
            "eps": self.eps_label,
            "reps": self.config.reps,
            "seed": self.config.seed,
            "kernel": self.config.kernel,
            "bandwidth": self.config.bandwidth_label,
            "alphas": list(self.config.alphas),
            "successes": self.successes,
            "failures": self.failures,
            "failure_messages": self.failure_messages,
            "coverage": by_alpha(self.coverage),
            "mean_area": by_alpha(self.mean_area),
            "ks_distance": dict(self.ks_distance),
            "mean_missing_rate": self.mean_missing_rate,
            "max_ipw_oracle_gap": self.max_ipw_oracle_gap,
            "u_values": self.u_values.tolist(),
            "v_values": self.v_values.tolist(),
            "bandwidths": [list(pair) for pair in self.bandwidths],
        }


def _aggregate(config: SimConfig, results: List[ReplicationResult]) -> SimReport:
    good = [r for r in sorted(results, key=lambda r: r.index) if r.ok]
    failed = [r for r in results if not r.ok]
    if not good:
        raise SimulationError(
            f"all {len(results)} replications failed; first error: {failed[0].error}"
        )
    k = len(good)
    coverage: Dict[str, Dict[float, float]] = {}
    mean_area: Dict[str, Dict[float, float]] = {}
    for method in METHODS:
        coverage[method] = {
            alpha: sum(r.covered[method][alpha] for r in good) / k for alpha in config.alphas
        }
        mean_area[method] = {
            alpha: float(np.mean([r.area[method][alpha] for r in good])) for alpha in config.alphas
        }
    u_values = np.array([r.u for r in good], dtype=float)
    v_values = np.array([r.v for r in good], dtype=float)
    ecdf = {
        Method.IPW: uniformity_diagnostic(u_values),
        Method.COMPLETE_CASE: uniformity_diagnostic(v_values),
    }
    return SimReport(
        config=config,
        u_values=u_values,
        v_values=v_values,
        coverage=coverage,
        mean_area=mean_area,
        ks_distance={method: diag.ks_distance for method, diag in ecdf.items()},
        ecdf=ecdf,
        successes=k,
        failures=len(failed),
        failure_messages=[r.error for r in sorted(failed, key=lambda r: r.index) if r.error],
        mean_missing_rate=float(np.mean([r.missing_rate for r in good])),
        max_ipw_oracle_gap=float(max(r.ipw_oracle_gap for r in good)),
        bandwidths=[(r.delta, r.beta) for r in good],
    )


def run_study(
    config: SimConfig,
    logger: Optional[StructuredLogger] = None,
) -> SimReport:
    """
    Run config.reps replications and aggregate them.

    Raises:
        SimulationError: If the config is invalid or every replication fails
    """
    config.validate()
    logger = logger or get_logger("simharness")
    with logger.timed_operation(
        "run_study", n=config.n, model=config.model.value, eps=config.eps.label, reps=config.reps
    ):
        results = ReplicationPool(config.workers, logger).run(config)
        report = _aggregate(config, results)
    if report.failures:
        logger.warning("Replications failed", failures=report.failures, reps=config.reps)
    logger.info(
        "Study finished",
        n=config.n,
        model=config.model.value,
        eps=config.eps.label,
        coverage=report.to_dict()["coverage"],
        ks_distance=report.ks_distance,
    )
    return report


@dataclass(eq=False)
class StudyTable:
    """Reports for every (n, model, eps) cell, laid out like a coverage table."""
    reports: List[SimReport]
    alphas: Tuple[float, ...]

    @property
    def columns(self) -> List[Tuple[int, str]]:
        seen: List[Tuple[int, str]] = []
        for report in self.reports:
            key = (report.config.n, report.config.model.value)
            if key not in seen:
                seen.append(key)
        return seen

    @property
    def eps_labels(self) -> List[str]:
        labels: List[str] = []
        for report in self.reports:
            if report.eps_label not in labels:
                labels.append(report.eps_label)
        return labels

    def lookup(self, n: int, model: str, eps_label: str) -> SimReport:
        for report in self.reports:
            if (report.config.n, report.config.model.value, report.eps_label) == (n, model, eps_label):
                return report
        raise KeyError((n, model, eps_label))

    def rows(self) -> List[Dict[str, object]]:
        """One row per (method, eps, alpha); coverage and area per (n, model) column."""
        out: List[Dict[str, object]] = []
        for method in METHODS:
            for eps_label in self.eps_labels:
                for alpha in self.alphas:
                    row: Dict[str, object] = {"method": method, "eps": eps_label, "alpha": alpha}
                    for n, model in self.columns:
                        report = self.lookup(n, model, eps_label)
                        row[f"coverage_n{n}_{model}"] = report.coverage[method][alpha]
                        row[f"area_n{n}_{model}"] = report.mean_area[method][alpha]
                    out.append(row)
        return out


def run_table(
    sizes: Sequence[int],
    models: Sequence[Union[str, MissingModel]],
    eps_specs: Sequence[EpsilonSpec],
    base: SimConfig,
    logger: Optional[StructuredLogger] = None,
) -> StudyTable:
    """run_study over every (n, model, eps) combination, all with base.seed."""
    if not sizes or not models or not eps_specs:
        raise SimulationError("run_table needs at least one size, model and eps spec")
    reports = [
        run_study(replace(base, n=n, model=MissingModel.parse(model), eps=eps), logger=logger)
        for n in sizes
        for model in models
        for eps in eps_specs
    ]
    return StudyTable(reports=reports, alphas=tuple(base.alphas))
