"""
Kernel estimators for regression with responses missing at random.

All estimators share the kernel weights w_i(x) = K((x - X_i)/h) and the
0/0 := 0 convention. Query points may be a scalar (scalar result) or an
array (array result). A response y_i is read only where delta_i = 1.

    nw_regress              sum Y_i w_i / sum w_i                       (full data)
    kde                     sum w_i / (n h)
    complete_case_regress   sum D_i Y_i w_i / sum D_i w_i
    estimate_selection_prob sum (D_i + e_i) K((x-X_i)/lam) / sum K(...)
    ipw_regress             sum [D_i Y_i / p(X_i) + e_i] w_i / sum w_i
    ipw_variance            sum [D_i Y_i / p(X_i) + e_i]^2 w_i / sum w_i - m^2
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import EXPONENT_LOWER, EXPONENT_UPPER
from src.kernelmath import Kernel

__all__ = [
    "EstimatorError",
    "Sample",
    "EpsilonKind",
    "EpsilonSpec",
    "BandwidthSpec",
    "SelectionEstimate",
    "SelectionProbability",
    "kernel_weights",
    "nw_regress",
    "kde",
    "complete_case_regress",
    "complete_case_density",
    "complete_case_variance",
    "full_data_variance",
    "estimate_selection_prob",
    "ipw_response",
    "ipw_regress",
    "ipw_variance",
    "draw_epsilons",
    "P_MIN",
    "SIGMA2_MIN",
]

P_MIN = 0.05
SIGMA2_MIN = 1e-8

# Rows of the (query x sample) weight matrix built at once.
_BLOCK_ROWS = 2048

ArrayLike = Union[float, Sequence[float], np.ndarray]
PhatFunction = Callable[[np.ndarray], np.ndarray]


class EstimatorError(Exception):
    """Raised when estimator inputs are inconsistent."""
    pass


@dataclass(frozen=True, eq=False)
class Sample:
    """
    Observed triples (x_i, y_i, delta_i).

    y_i may be NaN (or any value) where delta_i = 0; it is never read there.
    """
    x: np.ndarray
    y: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel()
        if x.size < 1:
            raise EstimatorError("sample must contain at least one record")
        if not (x.size == y.size == delta.size):
            raise EstimatorError("x, y and delta must have the same length")
        if not np.all(np.isfinite(x)):
            raise EstimatorError("covariates must be finite")
        if not np.all((delta == 0) | (delta == 1)):
            raise EstimatorError("delta must be 0 or 1")
        delta = delta.astype(np.int8)
        if not np.all(np.isfinite(y[delta == 1])):
            raise EstimatorError("observed responses (delta=1) must be finite")
        for name, arr in (("x", x), ("y", y), ("delta", delta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_records(cls, records: Iterable[Tuple[float, Optional[float], int]]) -> "Sample":
        """Build from (x, y-or-None, delta) tuples."""
        rows = list(records)
        x = [r[0] for r in rows]
        y = [np.nan if r[1] is None else r[1] for r in rows]
        delta = [r[2] for r in rows]
        return cls(np.array(x, dtype=float), np.array(y, dtype=float), np.array(delta))

    @classmethod
    def complete(cls, x: ArrayLike, y: ArrayLike) -> "Sample":
        """A sample with every response observed."""
        x = np.asarray(x, dtype=float)
        return cls(x, np.asarray(y, dtype=float), np.ones(x.size, dtype=np.int8))

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask of records with an observed response."""
        return self.delta == 1

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(self.delta))

    @property
    def has_missing(self) -> bool:
        return self.n_observed < self.n

    def masked_y(self) -> np.ndarray:
        """delta_i * y_i with unobserved responses read as 0."""
        return np.where(self.observed, self.y, 0.0)

    def shifted(self, offset: float) -> "Sample":
        """Same sample with every covariate moved by offset."""
        return Sample(self.x + offset, self.y, self.delta)


class EpsilonKind(Enum):
    """Distribution of the artificial perturbations."""
    ZERO = "zero"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class EpsilonSpec:
    """iid zero-mean bounded perturbations: all zero, or Unif(-kappa, kappa)."""
    kind: EpsilonKind = EpsilonKind.ZERO
    kappa: float = 0.0

    def __post_init__(self):
        if self.kappa < 0.0:
            raise EstimatorError("kappa cannot be negative")

    @classmethod
    def zero(cls) -> "EpsilonSpec":
        return cls(EpsilonKind.ZERO, 0.0)

    @classmethod
    def uniform(cls, kappa: float = 1e-3) -> "EpsilonSpec":
        return cls(EpsilonKind.UNIFORM, kappa)

    @property
    def bound(self) -> float:
        """Largest possible |eps_i|."""
        return self.kappa if self.kind == EpsilonKind.UNIFORM else 0.0

    @property
    def label(self) -> str:
        if self.kind == EpsilonKind.ZERO:
            return "zero"
        return f"uniform({self.kappa:g})"


@dataclass(frozen=True)
class BandwidthSpec:
    """Exponents for h_n = n^-delta and lambda_n = n^-beta, 1/5 < beta < delta < 1/3."""
    delta: float
    beta: float

    def __post_init__(self):
        if not (EXPONENT_LOWER < self.beta < self.delta < EXPONENT_UPPER):
            raise EstimatorError(
                f"bandwidth exponents must satisfy 1/5 < beta < delta < 1/3 "
                f"(got delta={self.delta}, beta={self.beta})"
            )

    def h(self, n: int) -> float:
        return float(n) ** (-self.delta)

    def lam(self, n: int) -> float:
        return float(n) ** (-self.beta)


def _query(x: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr).ravel(), arr.ndim == 0


def _result(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def _check_bandwidth(h: float) -> None:
    if not h > 0.0:
        raise EstimatorError(f"bandwidth must be positive, got {h}")


def kernel_weights(kernel: Kernel, x: np.ndarray, data: np.ndarray, h: float) -> np.ndarray:
    """Matrix K((x_j - X_i)/h) with query points on rows."""
    _check_bandwidth(h)
    return kernel((np.asarray(x, dtype=float)[:, None] - np.asarray(data, dtype=float)[None, :]) / h)


def _kernel_sums(
    kernel: Kernel,
    x: np.ndarray,
    data: np.ndarray,
    h: float,
    responses: Sequence[np.ndarray],
) -> Tuple[np.ndarray, list]:
    """sum_i w_i(x) and sum_i r_i w_i(x) for each response vector r, blockwise."""
    denom = np.empty(x.size)
    numers = [np.empty(x.size) for _ in responses]
    for start in range(0, x.size, _BLOCK_ROWS):
        stop = start + _BLOCK_ROWS
        w = kernel_weights(kernel, x[start:stop], data, h)
        denom[start:stop] = w.sum(axis=1)
        for numer, r in zip(numers, responses):
            numer[start:stop] = (w * r).sum(axis=1)
    return denom, numers


def _ratio(numer: np.ndarray, denom: np.ndarray) -> np.ndarray:
    """numer / denom with 0/0 := 0."""
    empty = denom == 0.0
    return np.where(empty, 0.0, numer / np.where(empty, 1.0, denom))


def nw_regress(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """Nadaraya-Watson estimate from a sample with every response observed."""
    if sample.has_missing:
        raise EstimatorError("nw_regress requires every response to be observed")
    xq, scalar = _query(x)
    denom, (numer,) = _kernel_sums(kernel, xq, sample.x, h, [sample.y])
    return _result(_ratio(numer, denom), scalar)


def full_data_variance(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """sigma_n^2(x): kernel second moment of Y minus the squared NW estimate."""
    if sample.has_missing:
        raise EstimatorError("full_data_variance requires every response to be observed")
    xq, scalar = _query(x)
    denom, (first, second) = _kernel_sums(kernel, xq, sample.x, h, [sample.y, sample.y ** 2])
    mean = _ratio(first, denom)
    return _result(_ratio(second, denom) - mean ** 2, scalar)


def kde(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """(1/(n h)) sum_i K((x - X_i)/h), over every record."""
    xq, scalar = _query(x)
    denom, _ = _kernel_sums(kernel, xq, sample.x, h, [])
    return _result(denom / (sample.n * h), scalar)


def complete_case_regress(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """Nadaraya-Watson estimate from the records with delta_i = 1."""
    xq, scalar = _query(x)
    obs = sample.observed
    denom, (numer,) = _kernel_sums(kernel, xq, sample.x[obs], h, [sample.y[obs]])
    return _result(_ratio(numer, denom), scalar)


def complete_case_density(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """(1/(n_obs h)) sum_i delta_i K((x - X_i)/h): the density of X from complete cases."""
    xq, scalar = _query(x)
    denom, _ = _kernel_sums(kernel, xq, sample.x[sample.observed], h, [])
    return _result(denom / (max(sample.n_observed, 1) * h), scalar)


def complete_case_variance(sample: Sample, kernel: Kernel, h: float, x: ArrayLike):
    """Complete-case conditional variance (raw, may be slightly negative)."""
    xq, scalar = _query(x)
    obs = sample.observed
    y = sample.y[obs]
    denom, (first, second) = _kernel_sums(kernel, xq, sample.x[obs], h, [y, y ** 2])
    mean = _ratio(first, denom)
    return _result(_ratio(second, denom) - mean ** 2, scalar)


@dataclass(frozen=True, eq=False)
class SelectionEstimate:
    """Selection probability at some points with clamping diagnostics."""
    values: np.ndarray
    raw: np.ndarray
    empty: np.ndarray
    clamped: np.ndarray

    @property
    def n_clamped(self) -> int:
        return int(np.count_nonzero(self.clamped))

    @property
    def n_empty(self) -> int:
        return int(np.count_nonzero(self.empty))


@dataclass(frozen=True, eq=False)
class SelectionProbability:
    """
    Fitted kernel estimate of p(x) = P(delta = 1 | X = x).

    The response regressed on X_i is delta_i + eps_i. Calling the object
    returns values clamped to [p_min, 1 + eps_bound]; empty windows give
    p_min.
    """
    sample: Sample
    kernel: Kernel
    lam: float
    eps: Optional[np.ndarray] = None
    p_min: float = P_MIN
    eps_bound: float = 0.0

    def __post_init__(self):
        _check_bandwidth(self.lam)
        eps = np.zeros(self.sample.n) if self.eps is None else np.asarray(self.eps, dtype=float)
        if eps.shape != (self.sample.n,):
            raise EstimatorError("eps must have one entry per record")
        object.__setattr__(self, "eps", eps)
        if not (0.0 < self.p_min <= 1.0):
            raise EstimatorError("p_min must lie in (0, 1]")

    def evaluate(self, x: ArrayLike) -> SelectionEstimate:
        xq, _ = _query(x)
        response = self.sample.delta + self.eps
        denom, (numer,) = _kernel_sums(self.kernel, xq, self.sample.x, self.lam, [response])
        empty = denom == 0.0
        raw = _ratio(numer, denom)
        upper = 1.0 + self.eps_bound
        values = np.clip(raw, self.p_min, upper)
        values = np.where(empty, self.p_min, values)
        clamped = (values != raw) & ~empty
        return SelectionEstimate(values=values, raw=raw, empty=empty, clamped=clamped)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return self.evaluate(x).values


def estimate_selection_prob(
    sample: Sample,
    kernel: Kernel,
    lam: float,
    eps: Optional[np.ndarray],
    x: ArrayLike,
    p_min: float = P_MIN,
    eps_bound: float = 0.0,
):
    """Clamped kernel estimate of the selection probability at x."""
    _, scalar = _query(x)
    values = SelectionProbability(sample, kernel, lam, eps, p_min, eps_bound)(x)
    return _result(values, scalar)


def _eps_vector(sample: Sample, eps: Optional[np.ndarray]) -> np.ndarray:
    if eps is None:
        return np.zeros(sample.n)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (sample.n,):
        raise EstimatorError("eps must have one entry per record")
    return eps


def ipw_response(sample: Sample, phat: PhatFunction, eps: Optional[np.ndarray] = None) -> np.ndarray:
    """delta_i Y_i / p(X_i) + eps_i for every record."""
    p_at_x = np.asarray(phat(sample.x), dtype=float)
    if np.any(p_at_x <= 0.0):
        raise EstimatorError("selection probability must be positive at every covariate")
    return sample.masked_y() / p_at_x + _eps_vector(sample, eps)


def ipw_regress(
    sample: Sample,
    kernel: Kernel,
    h: float,
    phat: PhatFunction,
    eps: Optional[np.ndarray],
    x: ArrayLike,
):
    """
    Inverse-probability-weighted kernel regression.

    With phat the fitted SelectionProbability this is the proposed
    estimator; with the true p it is the known-p estimator.
    """
    xq, scalar = _query(x)
    response = ipw_response(sample, phat, eps)
    denom, (numer,) = _kernel_sums(kernel, xq, sample.x, h, [response])
    return _result(_ratio(numer, denom), scalar)


def ipw_variance(
    sample: Sample,
    kernel: Kernel,
    h: float,
    phat: PhatFunction,
    eps: Optional[np.ndarray],
    x: ArrayLike,
    mhat_x: ArrayLike,
    sigma2_min: Optional[float] = None,
):
    """
    Kernel second moment of the weighted response minus mhat_x^2.

    Returned raw unless sigma2_min is given, in which case it is floored.
    """
    xq, scalar = _query(x)
    response = ipw_response(sample, phat, eps)
    denom, (second,) = _kernel_sums(kernel, xq, sample.x, h, [response ** 2])
    mhat = np.atleast_1d(np.asarray(mhat_x, dtype=float)).ravel()
    values = _ratio(second, denom) - mhat ** 2
    if sigma2_min is not None:
        values = np.maximum(values, sigma2_min)
    return _result(values, scalar)


def draw_epsilons(spec: EpsilonSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n perturbations drawn from rng; all zero for EpsilonKind.ZERO."""
    if n < 1:
        raise EstimatorError("n must be at least 1")
    if spec.kind == EpsilonKind.ZERO or spec.kappa == 0.0:
        return np.zeros(n)
    return rng.uniform(-spec.kappa, spec.kappa, size=n)
