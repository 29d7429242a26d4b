"""
Uniform confidence bands, maximal-deviation statistics and the
maximal-deviation test.

A band at level 1 - alpha is

    mhat(x) +- sqrt(c_K sigma2(x) / (n h fhat(x))) * (x_alpha / sqrt(2 delta log n) + d_n)

on a grid approximating the interval. Grid points whose kernel window is
empty carry the EMPTY_WINDOW flag: their band is (-inf, +inf) and they are
left out of every supremum.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntFlag
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from src.estimators import (
    BandwidthSpec,
    EpsilonSpec,
    P_MIN,
    SIGMA2_MIN,
    Sample,
    SelectionProbability,
    complete_case_density,
    complete_case_regress,
    complete_case_variance,
    draw_epsilons,
    full_data_variance,
    ipw_regress,
    ipw_variance,
    kde,
    kernel_weights,
    nw_regress,
)
from src.kernelmath import (
    Kernel,
    KernelConstants,
    d_n,
    gumbel_cdf,
    gumbel_quantile,
    kernel_constants,
    log_scale,
)
from src.logger import StructuredLogger, get_logger

__all__ = [
    "BandError",
    "PointFlag",
    "GridSpec",
    "GridFit",
    "BandResult",
    "DeviationStat",
    "TestResult",
    "Method",
    "fit_ipw",
    "fit_complete_case",
    "fit_full_data",
    "band_from_fit",
    "build_band",
    "build_bands",
    "build_complete_case_band",
    "build_full_data_band",
    "deviation_stat",
    "complete_case_stat",
    "critical_value",
    "test_from_fit",
    "max_deviation_test",
    "flag_names",
    "parse_flags",
]

CurveFunction = Callable[[np.ndarray], np.ndarray]


class BandError(Exception):
    """Raised when no usable band can be formed."""
    pass


class PointFlag(IntFlag):
    """Per-grid-point diagnostics."""
    NONE = 0
    EMPTY_WINDOW = 1
    CLAMPED_P = 2
    FLOORED_VARIANCE = 4


_FLAG_NAMES = {
    PointFlag.EMPTY_WINDOW: "empty-window",
    PointFlag.CLAMPED_P: "clamped-p",
    PointFlag.FLOORED_VARIANCE: "floored-variance",
}


def flag_names(flags: int) -> str:
    """'empty-window|clamped-p' style rendering; '' when no flag is set."""
    return "|".join(name for bit, name in _FLAG_NAMES.items() if flags & bit)


def parse_flags(text: str) -> int:
    """Inverse of flag_names."""
    lookup = {name: bit for bit, name in _FLAG_NAMES.items()}
    value = 0
    for token in filter(None, (t.strip() for t in text.split("|"))):
        if token not in lookup:
            raise BandError(f"unknown flag '{token}'")
        value |= int(lookup[token])
    return value


class Method:
    """Estimator families that produce bands."""
    IPW = "ipw"
    COMPLETE_CASE = "complete-case"
    FULL_DATA = "full-data"


@dataclass(frozen=True)
class GridSpec:
    """count equally spaced points on [lo, hi]."""
    lo: float = 0.0
    hi: float = 1.0
    count: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise BandError("grid lower bound must be below the upper bound")
        if self.count < 2:
            raise BandError("grid needs at least 2 points")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True, eq=False)
class GridFit:
    """Estimates on the grid that every band and statistic is built from."""
    method: str
    grid: np.ndarray
    mhat: np.ndarray
    fhat: np.ndarray
    sigma2: np.ndarray
    flags: np.ndarray
    n: int
    h: float

    @property
    def usable(self) -> np.ndarray:
        return (self.flags & PointFlag.EMPTY_WINDOW) == 0

    def flag_counts(self) -> Dict[str, int]:
        return {
            name: int(np.count_nonzero(self.flags & bit))
            for bit, name in _FLAG_NAMES.items()
        }


@dataclass(frozen=True, eq=False)
class BandResult:
    """A uniform confidence band on a grid plus its normalizing constants."""
    method: str
    grid: np.ndarray
    mhat: np.ndarray
    fhat: np.ndarray
    sigma2: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    flags: np.ndarray
    alpha: float
    n: int
    h: float
    delta: float
    beta: Optional[float]
    kernel: str
    constants: KernelConstants
    d_n: float
    x_alpha: float

    @property
    def usable(self) -> np.ndarray:
        return (self.flags & PointFlag.EMPTY_WINDOW) == 0

    @property
    def half_width(self) -> np.ndarray:
        return (self.upper - self.lower) / 2.0

    def area(self) -> float:
        """Trapezoid integral of upper - lower over the usable grid points."""
        usable = self.usable
        if np.count_nonzero(usable) < 2:
            return 0.0
        return float(integrate.trapezoid((self.upper - self.lower)[usable], self.grid[usable]))

    def contains(self, curve: Union[CurveFunction, np.ndarray]) -> bool:
        """True when the curve lies inside the band at every usable grid point."""
        values = curve(self.grid) if callable(curve) else np.asarray(curve, dtype=float)
        usable = self.usable
        inside = (self.lower <= values) & (values <= self.upper)
        return bool(np.all(inside[usable]))

    def header(self) -> Dict[str, object]:
        """Scalar metadata describing the band."""
        return {
            "method": self.method,
            "n": self.n,
            "alpha": self.alpha,
            "delta": self.delta,
            "beta": self.beta,
            "h": self.h,
            "kernel": self.kernel,
            "c_K": self.constants.c_k,
            "C1": self.constants.c1,
            "C2": self.constants.c2,
            "A": self.constants.support,
            "d_n": self.d_n,
            "x_alpha": self.x_alpha,
            "grid_lo": float(self.grid[0]),
            "grid_hi": float(self.grid[-1]),
            "grid_count": int(self.grid.size),
        }


@dataclass(frozen=True)
class DeviationStat:
    """Normalized maximal deviation and its Gumbel-CDF transform."""
    sup_value: float
    u_n: float
    u: float


@dataclass(frozen=True)
class TestResult:
    """Outcome of the maximal-deviation test of H0: m = m0."""
    __test__ = False

    reject: bool
    t_n: float
    critical: float

    def to_dict(self) -> Dict[str, object]:
        return {"reject": self.reject, "t_n": self.t_n, "critical": self.critical}


def _flags_from(empty: np.ndarray, floored: np.ndarray, clamped: Optional[np.ndarray] = None) -> np.ndarray:
    flags = np.where(empty, int(PointFlag.EMPTY_WINDOW), 0)
    flags = flags | np.where(floored & ~empty, int(PointFlag.FLOORED_VARIANCE), 0)
    if clamped is not None:
        flags = flags | np.where(clamped & ~empty, int(PointFlag.CLAMPED_P), 0)
    return flags.astype(np.int64)


def _log_diagnostics(fit: GridFit, logger: StructuredLogger) -> None:
    counts = fit.flag_counts()
    if any(counts.values()):
        logger.warning("Grid diagnostics fired", method=fit.method, n=fit.n, **counts)


def fit_ipw(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    eps: Optional[np.ndarray],
    grid: np.ndarray,
    p_min: float = P_MIN,
    sigma2_min: float = SIGMA2_MIN,
    eps_bound: float = 0.0,
) -> GridFit:
    """
    Proposed estimator on the grid: phat at the X_i, then mhat, sigma2, fhat.

    A grid point gets CLAMPED_P when some X_i inside its h-window had its
    selection probability clamped.
    """
    n = sample.n
    h = bw.h(n)
    phat = SelectionProbability(sample, kernel, bw.lam(n), eps, p_min, eps_bound)
    selection = phat.evaluate(sample.x)
    p_at_x = selection.values

    def phat_at_sample(_x: np.ndarray) -> np.ndarray:
        return p_at_x

    mhat = ipw_regress(sample, kernel, h, phat_at_sample, eps, grid)
    raw_sigma2 = ipw_variance(sample, kernel, h, phat_at_sample, eps, grid, mhat)
    fhat = kde(sample, kernel, h, grid)
    empty = fhat == 0.0
    clamped_nearby = (
        kernel_weights(kernel, grid, sample.x, h)
        @ (selection.clamped | selection.empty).astype(float)
    ) > 0.0
    return GridFit(
        method=Method.IPW,
        grid=grid,
        mhat=mhat,
        fhat=fhat,
        sigma2=np.maximum(raw_sigma2, sigma2_min),
        flags=_flags_from(empty, raw_sigma2 < sigma2_min, clamped_nearby),
        n=n,
        h=h,
    )


def fit_complete_case(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    grid: np.ndarray,
    sigma2_min: float = SIGMA2_MIN,
) -> GridFit:
    """Complete-case mbar, fbar and sigma2bar on the grid."""
    n = sample.n
    h = bw.h(n)
    mbar = complete_case_regress(sample, kernel, h, grid)
    fbar = complete_case_density(sample, kernel, h, grid)
    raw_sigma2 = complete_case_variance(sample, kernel, h, grid)
    empty = fbar == 0.0
    return GridFit(
        method=Method.COMPLETE_CASE,
        grid=grid,
        mhat=mbar,
        fhat=fbar,
        sigma2=np.maximum(raw_sigma2, sigma2_min),
        flags=_flags_from(empty, raw_sigma2 < sigma2_min),
        n=n,
        h=h,
    )


def fit_full_data(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    grid: np.ndarray,
    sigma2_min: float = SIGMA2_MIN,
) -> GridFit:
    """Nadaraya-Watson fit for a sample without missing responses."""
    n = sample.n
    h = bw.h(n)
    mhat = nw_regress(sample, kernel, h, grid)
    fhat = kde(sample, kernel, h, grid)
    raw_sigma2 = full_data_variance(sample, kernel, h, grid)
    empty = fhat == 0.0
    return GridFit(
        method=Method.FULL_DATA,
        grid=grid,
        mhat=mhat,
        fhat=fhat,
        sigma2=np.maximum(raw_sigma2, sigma2_min),
        flags=_flags_from(empty, raw_sigma2 < sigma2_min),
        n=n,
        h=h,
    )


def _band_factor(n: int, delta: float, consts: KernelConstants, alpha: float):
    x_alpha = gumbel_quantile(alpha)
    dn = d_n(n, delta, consts)
    factor = x_alpha / log_scale(n, delta) + dn
    if factor <= 0.0:
        raise BandError(f"alpha={alpha} gives a non-positive band multiplier at n={n}")
    return factor, dn, x_alpha


def band_from_fit(
    fit: GridFit,
    kernel: Kernel,
    delta: float,
    alpha: float,
    beta: Optional[float] = None,
) -> BandResult:
    """
    Turn grid estimates into a (1 - alpha) band.

    Raises:
        BandError: If every grid point has an empty window
    """
    usable = fit.usable
    if not np.any(usable):
        raise BandError("every grid point has an empty kernel window; no usable band")
    consts = kernel_constants(kernel)
    factor, dn, x_alpha = _band_factor(fit.n, delta, consts, alpha)
    safe_f = np.where(usable, fit.fhat, 1.0)
    half = np.sqrt(consts.c_k * fit.sigma2 / (fit.n * fit.h * safe_f)) * factor
    half = np.where(usable, half, np.inf)
    return BandResult(
        method=fit.method,
        grid=fit.grid,
        mhat=fit.mhat,
        fhat=fit.fhat,
        sigma2=fit.sigma2,
        lower=fit.mhat - half,
        upper=fit.mhat + half,
        flags=fit.flags,
        alpha=alpha,
        n=fit.n,
        h=fit.h,
        delta=delta,
        beta=beta,
        kernel=kernel.name.value,
        constants=consts,
        d_n=dn,
        x_alpha=x_alpha,
    )


def _resolve_eps(
    eps_spec: EpsilonSpec,
    n: int,
    eps: Optional[np.ndarray],
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    if eps is not None:
        return np.asarray(eps, dtype=float)
    if rng is None:
        if eps_spec.bound > 0.0:
            raise BandError(f"eps spec {eps_spec.label} needs rng or a realized eps vector")
        return np.zeros(n)
    return draw_epsilons(eps_spec, n, rng)


def build_band(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    eps_spec: EpsilonSpec,
    alpha: float,
    grid_spec: GridSpec = GridSpec(),
    *,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[np.ndarray] = None,
    p_min: float = P_MIN,
    sigma2_min: float = SIGMA2_MIN,
    logger: Optional[StructuredLogger] = None,
) -> BandResult:
    """
    (1 - alpha) band around the inverse-probability-weighted estimator.

    eps, when given, is used as the realized perturbation vector; otherwise
    it is drawn from eps_spec with rng. A nonzero spec needs one of the two.

    Raises:
        BandError: If no grid point is usable, or eps_spec is nonzero and
            neither eps nor rng is given
    """
    logger = logger or get_logger("bands")
    eps_vec = _resolve_eps(eps_spec, sample.n, eps, rng)
    with logger.timed_operation("build_band", n=sample.n, alpha=alpha):
        fit = fit_ipw(
            sample, kernel, bw, eps_vec, grid_spec.points(),
            p_min=p_min, sigma2_min=sigma2_min, eps_bound=eps_spec.bound,
        )
        _log_diagnostics(fit, logger)
        return band_from_fit(fit, kernel, bw.delta, alpha, beta=bw.beta)


def build_complete_case_band(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    alpha: float,
    grid_spec: GridSpec = GridSpec(),
    sigma2_min: float = SIGMA2_MIN,
) -> BandResult:
    """(1 - alpha) band around the complete-case estimator."""
    fit = fit_complete_case(sample, kernel, bw, grid_spec.points(), sigma2_min)
    return band_from_fit(fit, kernel, bw.delta, alpha)


def build_full_data_band(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    alpha: float,
    grid_spec: GridSpec = GridSpec(),
    sigma2_min: float = SIGMA2_MIN,
) -> BandResult:
    """(1 - alpha) band around the Nadaraya-Watson estimator (no missing data)."""
    fit = fit_full_data(sample, kernel, bw, grid_spec.points(), sigma2_min)
    return band_from_fit(fit, kernel, bw.delta, alpha)


def _normalized_deviation(fit: Union[GridFit, BandResult], curve: np.ndarray) -> np.ndarray:
    usable = fit.usable
    if not np.any(usable):
        raise BandError("every grid point has an empty kernel window")
    return (np.sqrt(fit.fhat / fit.sigma2) * np.abs(fit.mhat - curve))[usable]


def deviation_stat(
    fit: Union[GridFit, BandResult],
    true_m: CurveFunction,
    delta: float,
    consts: KernelConstants,
) -> DeviationStat:
    """
    sup over the grid of sqrt(fhat/sigma2)|mhat - m|, its normalization
    u_n and u = exp(-2 exp(-u_n)).
    """
    sup_value = float(np.max(_normalized_deviation(fit, true_m(fit.grid))))
    scale = log_scale(fit.n, delta)
    u_n = scale * (np.sqrt(fit.n * fit.h / consts.c_k) * sup_value - d_n(fit.n, delta, consts))
    return DeviationStat(sup_value=sup_value, u_n=float(u_n), u=float(gumbel_cdf(u_n)))


def complete_case_stat(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    true_m: CurveFunction,
    grid_spec: GridSpec = GridSpec(),
    sigma2_min: float = SIGMA2_MIN,
) -> DeviationStat:
    """deviation_stat with the complete-case estimators."""
    fit = fit_complete_case(sample, kernel, bw, grid_spec.points(), sigma2_min)
    return deviation_stat(fit, true_m, bw.delta, kernel_constants(kernel))


def critical_value(n: int, h: float, delta: float, consts: KernelConstants, alpha: float) -> float:
    """sqrt(c_K/(n h)) * (x_alpha / sqrt(2 delta log n) + d_n)."""
    factor, _, _ = _band_factor(n, delta, consts, alpha)
    return float(np.sqrt(consts.c_k / (n * h)) * factor)


def test_from_fit(
    fit: GridFit,
    m0: CurveFunction,
    alpha: float,
    delta: float,
    consts: KernelConstants,
) -> TestResult:
    """Maximal-deviation test of H0: m = m0 from grid estimates."""
    t_n = float(np.max(_normalized_deviation(fit, m0(fit.grid))))
    critical = critical_value(fit.n, fit.h, delta, consts, alpha)
    return TestResult(reject=bool(t_n > critical), t_n=t_n, critical=critical)


# pytest would otherwise try to collect test_from_fit as a test.
test_from_fit.__test__ = False  # type: ignore[attr-defined]


def max_deviation_test(
    sample: Sample,
    kernel: Kernel,
    bw: BandwidthSpec,
    eps_spec: EpsilonSpec,
    m0: CurveFunction,
    alpha: float,
    grid_spec: GridSpec = GridSpec(),
    *,
    rng: Optional[np.random.Generator] = None,
    eps: Optional[np.ndarray] = None,
    p_min: float = P_MIN,
    sigma2_min: float = SIGMA2_MIN,
    logger: Optional[StructuredLogger] = None,
) -> TestResult:
    """
    Reject H0: m = m0 at level alpha when the normalized maximal deviation
    exceeds the critical value. Rejects exactly when m0 leaves the
    (1 - alpha) band somewhere on the grid.

    Raises:
        BandError: If no grid point is usable, or eps_spec is nonzero and
            neither eps nor rng is given
    """
    if not (0.0 < alpha < 1.0):
        raise BandError(f"alpha must lie in (0, 1), got {alpha}")
    eps_vec = _resolve_eps(eps_spec, sample.n, eps, rng)
    fit = fit_ipw(
        sample, kernel, bw, eps_vec, grid_spec.points(),
        p_min=p_min, sigma2_min=sigma2_min, eps_bound=eps_spec.bound,
    )
    _log_diagnostics(fit, logger or get_logger("bands"))
    return test_from_fit(fit, m0, alpha, bw.delta, kernel_constants(kernel))


def build_bands(
    fit: GridFit,
    kernel: Kernel,
    delta: float,
    alphas: Sequence[float],
    beta: Optional[float] = None,
) -> List[BandResult]:
    """One band per alpha from a single fit."""
    return [band_from_fit(fit, kernel, delta, alpha, beta=beta) for alpha in alphas]
