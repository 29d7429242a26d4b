"""
Kernel functions on compact support and the normalizing constants of the
Gumbel-type limit for the maximal deviation of a kernel regression
estimator.

For a kernel K vanishing off [-A, A]:

    c_K = int K^2
    C1  = (K^2(A) + K^2(-A)) / (2 c_K)
    C2  = int K'^2 / (2 c_K)

and, with h_n = n^-delta,

    d_n = sqrt(2 delta log n) + [log(C1/sqrt(pi)) + 0.5 log(log n^delta)] / sqrt(2 delta log n)   (C1 > 0)
    d_n = sqrt(2 delta log n) + 0.5 log(C2 / (2 pi^2)) / sqrt(2 delta log n)                       (C1 = 0)

The triangular kernel is not differentiable at 0. Its derivative is taken
piecewise (-sign(u)), which keeps C2 finite; the limit theory nominally
asks for a continuously differentiable kernel, so bands built with it are
outside the strict assumptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Union

import numpy as np
from scipy import integrate

__all__ = [
    "KernelMathError",
    "UnsupportedKernelError",
    "ParameterError",
    "KernelName",
    "Kernel",
    "KernelConstants",
    "EPANECHNIKOV",
    "BIWEIGHT",
    "TRIANGULAR",
    "SUPPORTED_KERNELS",
    "get_kernel",
    "kernel_constants",
    "quadrature_constants",
    "kernel_integral",
    "log_scale",
    "d_n",
    "gumbel_quantile",
    "gumbel_cdf",
]

C1_THRESHOLD = 1e-12
QUAD_EPSABS = 1e-10

ArrayLike = Union[float, np.ndarray]


class KernelMathError(Exception):
    """Base exception for kernel math errors."""
    pass


class UnsupportedKernelError(KernelMathError):
    """Raised for kernels outside the supported compact, differentiable family."""
    pass


class ParameterError(KernelMathError, ValueError):
    """Raised when n, delta or alpha is out of range."""
    pass


class KernelName(Enum):
    """Supported kernel families."""
    EPANECHNIKOV = "epanechnikov"
    BIWEIGHT = "biweight"
    TRIANGULAR = "triangular"


@dataclass(frozen=True)
class Kernel:
    """
    A symmetric probability density on [-support, support].

    Attributes:
        name: Kernel family
        support: Half-width A of the support
        func: u -> K(u), vectorised
        deriv: u -> K'(u), vectorised; None when K' does not exist
        c_k: Closed-form int K^2, if known
        deriv_sq: Closed-form int K'^2, if known
        kinks: Interior points where K' jumps (quadrature breakpoints)
    """
    name: KernelName
    support: float
    func: Callable[[np.ndarray], np.ndarray]
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    c_k: Optional[float] = None
    deriv_sq: Optional[float] = None
    kinks: tuple = ()

    def __call__(self, u: ArrayLike) -> np.ndarray:
        return self.func(np.asarray(u, dtype=float))

    def derivative(self, u: ArrayLike) -> np.ndarray:
        if self.deriv is None:
            raise UnsupportedKernelError(f"kernel {self.name.value} has no derivative")
        return self.deriv(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class KernelConstants:
    """Kernel functionals entering the Gumbel limit."""
    c_k: float
    c1: float
    c2: float
    support: float

    @property
    def boundary_branch(self) -> bool:
        """True when the C1 > 0 form of d_n applies."""
        return self.c1 > C1_THRESHOLD

    def to_dict(self) -> Dict[str, float]:
        return {"A": self.support, "c_K": self.c_k, "C1": self.c1, "C2": self.c2}


def _on_support(u: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.where(np.abs(u) <= 1.0, values, 0.0)


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    return _on_support(u, 0.75 * (1.0 - u * u))


def _epanechnikov_deriv(u: np.ndarray) -> np.ndarray:
    return _on_support(u, -1.5 * u)


def _biweight(u: np.ndarray) -> np.ndarray:
    return _on_support(u, 0.9375 * (1.0 - u * u) ** 2)


def _biweight_deriv(u: np.ndarray) -> np.ndarray:
    return _on_support(u, -3.75 * u * (1.0 - u * u))


def _triangular(u: np.ndarray) -> np.ndarray:
    return _on_support(u, 1.0 - np.abs(u))


def _triangular_deriv(u: np.ndarray) -> np.ndarray:
    return _on_support(u, -np.sign(u))


EPANECHNIKOV = Kernel(
    name=KernelName.EPANECHNIKOV,
    support=1.0,
    func=_epanechnikov,
    deriv=_epanechnikov_deriv,
    c_k=3.0 / 5.0,
    deriv_sq=3.0 / 2.0,
)

BIWEIGHT = Kernel(
    name=KernelName.BIWEIGHT,
    support=1.0,
    func=_biweight,
    deriv=_biweight_deriv,
    c_k=5.0 / 7.0,
    deriv_sq=15.0 / 7.0,
)

TRIANGULAR = Kernel(
    name=KernelName.TRIANGULAR,
    support=1.0,
    func=_triangular,
    deriv=_triangular_deriv,
    c_k=2.0 / 3.0,
    deriv_sq=2.0,
    kinks=(0.0,),
)

SUPPORTED_KERNELS: Dict[KernelName, Kernel] = {
    kernel.name: kernel for kernel in (EPANECHNIKOV, BIWEIGHT, TRIANGULAR)
}


def get_kernel(name: Union[str, KernelName, Kernel]) -> Kernel:
    """
    Look up a supported kernel by name.

    Raises:
        UnsupportedKernelError: For unknown names (gaussian, uniform, ...)
    """
    if isinstance(name, Kernel):
        return name
    if isinstance(name, KernelName):
        return SUPPORTED_KERNELS[name]
    try:
        return SUPPORTED_KERNELS[KernelName(str(name).strip().lower())]
    except ValueError:
        supported = ", ".join(k.value for k in KernelName)
        raise UnsupportedKernelError(
            f"unsupported kernel '{name}'; supported kernels: {supported}"
        ) from None


def _quad(func: Callable[[float], float], kernel: Kernel) -> float:
    a = kernel.support
    points = [p for p in kernel.kinks if -a < p < a] or None
    value, _ = integrate.quad(func, -a, a, points=points, epsabs=QUAD_EPSABS, limit=200)
    return float(value)


def kernel_integral(kernel: Kernel) -> float:
    """int K over the support, by adaptive quadrature."""
    return _quad(lambda t: float(kernel(t)), kernel)


def _boundary_term(kernel: Kernel, c_k: float) -> float:
    a = kernel.support
    edge = float(kernel(a)) ** 2 + float(kernel(-a)) ** 2
    return edge / (2.0 * c_k)


def quadrature_constants(kernel: Kernel) -> KernelConstants:
    """Kernel constants computed purely by adaptive quadrature."""
    if kernel.deriv is None:
        raise UnsupportedKernelError(
            f"kernel {kernel.name.value} has no continuous derivative; C2 is undefined"
        )
    c_k = _quad(lambda t: float(kernel(t)) ** 2, kernel)
    deriv_sq = _quad(lambda t: float(kernel.derivative(t)) ** 2, kernel)
    return KernelConstants(
        c_k=c_k,
        c1=_boundary_term(kernel, c_k),
        c2=deriv_sq / (2.0 * c_k),
        support=kernel.support,
    )


def kernel_constants(kernel: Union[str, KernelName, Kernel]) -> KernelConstants:
    """
    Return (c_K, C1, C2, A) for a kernel.

    Closed forms are used when the kernel carries them; otherwise the
    integrals are computed by adaptive quadrature (absolute tolerance 1e-10).

    Raises:
        UnsupportedKernelError: If the kernel has no derivative
    """
    kernel = get_kernel(kernel)
    if kernel.deriv is None:
        raise UnsupportedKernelError(
            f"kernel {kernel.name.value} has no continuous derivative; C2 is undefined"
        )
    if kernel.c_k is None or kernel.deriv_sq is None:
        return quadrature_constants(kernel)
    return KernelConstants(
        c_k=kernel.c_k,
        c1=_boundary_term(kernel, kernel.c_k),
        c2=kernel.deriv_sq / (2.0 * kernel.c_k),
        support=kernel.support,
    )


def _check_n_delta(n: int, delta: float) -> None:
    if n < 2:
        raise ParameterError(f"sample size must be at least 2, got {n}")
    if not (0.2 < delta < 1.0 / 3.0):
        raise ParameterError(f"delta must lie in (1/5, 1/3), got {delta}")


def log_scale(n: int, delta: float) -> float:
    """sqrt(2 delta log n), the scale of the extreme-value normalization."""
    _check_n_delta(n, delta)
    return math.sqrt(2.0 * delta * math.log(n))


def d_n(n: int, delta: float, consts: KernelConstants) -> float:
    """
    Centering sequence of the maximal-deviation limit.

    Raises:
        ParameterError: If n < 2 or delta is outside (1/5, 1/3)
    """
    scale = log_scale(n, delta)
    if consts.boundary_branch:
        correction = math.log(consts.c1 / math.sqrt(math.pi)) + 0.5 * math.log(delta * math.log(n))
    else:
        if consts.c2 <= 0.0:
            raise ParameterError("C2 must be positive when C1 = 0")
        correction = 0.5 * math.log(consts.c2 / (2.0 * math.pi ** 2))
    return scale + correction / scale


def gumbel_quantile(alpha: float) -> float:
    """
    x^(alpha): the solution of exp(-2 exp(-x)) = 1 - alpha.

    Raises:
        ParameterError: If alpha is outside (0, 1)
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    # log(1/(1-alpha)) = -log1p(-alpha)
    return math.log(2.0) - math.log(-math.log1p(-alpha))


def gumbel_cdf(y: ArrayLike) -> ArrayLike:
    """exp(-2 exp(-y)); scalar in, scalar out."""
    with np.errstate(over="ignore"):
        value = np.exp(-2.0 * np.exp(-np.asarray(y, dtype=float)))
    if np.ndim(value) == 0:
        return float(value)
    return value
