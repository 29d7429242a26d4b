"""
Leave-one-out selection of the bandwidth exponents.

delta is chosen first by LOO least squares on the complete-case
regression with h = n^-delta; beta is then chosen by LOO least squares of
the selection-probability smoother predicting delta_i + eps_i, over grid
exponents g with 1/5 < g <= delta - beta_margin. Ties go to the smaller
exponent (larger bandwidth).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.config import EXPONENT_LOWER, EXPONENT_UPPER
from src.estimators import BandwidthSpec, Sample, kernel_weights
from src.kernelmath import Kernel
from src.logger import StructuredLogger, get_logger, timed

__all__ = [
    "BandwidthSelectionError",
    "CvConfig",
    "default_delta_grid",
    "loo_regression_errors",
    "select_delta",
    "select_beta",
    "select_bandwidths",
]

MIN_SAMPLE_SIZE = 20
TIE_RTOL = 1e-9

# LOO rows evaluated per weight block.
_BLOCK_ROWS = 1024


class BandwidthSelectionError(Exception):
    """Raised when the exponents cannot be selected."""
    pass


def default_delta_grid() -> List[float]:
    """14 equally spaced exponents on [0.205, 0.330]."""
    return [float(g) for g in np.linspace(0.205, 0.330, 14)]


@dataclass(frozen=True)
class CvConfig:
    """Exponent grid and the minimum gap delta - beta."""
    delta_grid: Sequence[float] = field(default_factory=default_delta_grid)
    beta_margin: float = 0.01

    def __post_init__(self):
        grid = tuple(sorted(float(g) for g in self.delta_grid))
        if not grid:
            raise BandwidthSelectionError("exponent grid cannot be empty")
        for g in grid:
            if not (EXPONENT_LOWER < g < EXPONENT_UPPER):
                raise BandwidthSelectionError(
                    f"grid exponent {g} lies outside (1/5, 1/3)"
                )
        if self.beta_margin <= 0.0:
            raise BandwidthSelectionError("beta_margin must be positive")
        object.__setattr__(self, "delta_grid", grid)


def loo_regression_errors(
    x: np.ndarray,
    y: np.ndarray,
    kernel: Kernel,
    h: float,
) -> np.ndarray:
    """
    Squared leave-one-out errors (y_i - m^(-i)(x_i))^2 of the NW smoother.

    An empty leave-one-out window predicts 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    errors = np.empty(x.size)
    for start in range(0, x.size, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, x.size)
        w = kernel_weights(kernel, x[start:stop], x, h)
        rows = np.arange(stop - start)
        w[rows, rows + start] = 0.0
        denom = w.sum(axis=1)
        numer = (w * y).sum(axis=1)
        empty = denom == 0.0
        pred = np.where(empty, 0.0, numer / np.where(empty, 1.0, denom))
        errors[start:stop] = (y[start:stop] - pred) ** 2
    return errors


def _argmin_with_ties(scores: Sequence[float], scale: float) -> int:
    """First index whose score is within the tie tolerance of the minimum."""
    scores = np.asarray(scores, dtype=float)
    best = float(scores.min())
    tol = TIE_RTOL * max(best, 1e-12 * scale)
    return int(np.flatnonzero(scores <= best + tol)[0])


@timed(operation="select_delta")
def select_delta(
    sample: Sample,
    kernel: Kernel,
    eps: Optional[np.ndarray],
    config: CvConfig,
    logger: Optional[StructuredLogger] = None,
) -> float:
    """
    Grid exponent minimizing the complete-case LOO squared error.

    eps does not enter the complete-case criterion; it is accepted so both
    selectors share a signature.

    Raises:
        BandwidthSelectionError: If n < 20 or fewer than 2 complete cases
    """
    if sample.n < MIN_SAMPLE_SIZE:
        raise BandwidthSelectionError(
            f"bandwidth selection needs at least {MIN_SAMPLE_SIZE} records, got {sample.n}"
        )
    if sample.n_observed < 2:
        raise BandwidthSelectionError("bandwidth selection needs at least 2 complete cases")
    obs = sample.observed
    x, y = sample.x[obs], sample.y[obs]
    scores = [
        float(loo_regression_errors(x, y, kernel, sample.n ** (-g)).sum())
        for g in config.delta_grid
    ]
    chosen = config.delta_grid[_argmin_with_ties(scores, float(np.sum(y ** 2)))]
    (logger or get_logger("bandwidth")).debug(
        "Selected delta", delta=chosen, scores=scores, n=sample.n
    )
    return chosen


def _beta_fallback(delta: float, margin: float) -> float:
    candidate = delta - margin
    if candidate > EXPONENT_LOWER:
        return candidate
    return 0.5 * (EXPONENT_LOWER + delta)


@timed(operation="select_beta")
def select_beta(
    sample: Sample,
    kernel: Kernel,
    eps: Optional[np.ndarray],
    delta: float,
    config: CvConfig,
    logger: Optional[StructuredLogger] = None,
) -> float:
    """
    Grid exponent for lambda_n = n^-beta from the selection-probability LOO error.

    Only grid points with 1/5 < g <= delta - beta_margin are admissible;
    with none left the fallback is delta - beta_margin, or the midpoint of
    (1/5, delta) when that would leave the admissible range.
    """
    if not (EXPONENT_LOWER < delta < EXPONENT_UPPER):
        raise BandwidthSelectionError(f"delta must lie in (1/5, 1/3), got {delta}")
    eps_vec = np.zeros(sample.n) if eps is None else np.asarray(eps, dtype=float)
    admissible = [
        g for g in config.delta_grid
        if EXPONENT_LOWER < g <= delta - config.beta_margin
    ]
    if not admissible:
        chosen = _beta_fallback(delta, config.beta_margin)
    else:
        response = sample.delta + eps_vec
        scores = [
            float(loo_regression_errors(sample.x, response, kernel, sample.n ** (-g)).sum())
            for g in admissible
        ]
        chosen = admissible[_argmin_with_ties(scores, float(np.sum(response ** 2)))]
    (logger or get_logger("bandwidth")).debug(
        "Selected beta", beta=chosen, delta=delta, admissible=len(admissible)
    )
    return chosen


def select_bandwidths(
    sample: Sample,
    kernel: Kernel,
    eps: Optional[np.ndarray],
    config: Optional[CvConfig] = None,
) -> BandwidthSpec:
    """delta by complete-case CV, then beta below it."""
    config = config or CvConfig()
    delta = select_delta(sample, kernel, eps, config)
    beta = select_beta(sample, kernel, eps, delta, config)
    return BandwidthSpec(delta=delta, beta=beta)
