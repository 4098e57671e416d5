"""Strictly stable laws: parameters, positivity index and density inversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

# |G(t)| = exp(-c t^alpha) drops below 1e-16 once c t^alpha exceeds this.
_CF_CUTOFF = 37.0
_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


class DomainError(ValueError):
    """Raised for (alpha, beta) pairs outside the supported parameter set."""


class QuadratureError(RuntimeError):
    """Raised when the density quadrature fails to converge."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


def is_admissible(alpha: float, beta: float) -> bool:
    if alpha == 1.0 or alpha == 2.0:
        return beta == 0.0
    if 0.0 < alpha < 1.0:
        return abs(beta) < 1.0
    if 1.0 < alpha < 2.0:
        return abs(beta) <= 1.0
    return False


def rho_from(alpha: float, beta: float) -> float:
    """Positivity index P(Y > 0) of the stable law with exponent alpha, skewness beta."""
    if not is_admissible(alpha, beta):
        raise DomainError(f"(alpha, beta) = ({alpha}, {beta}) is not admissible")
    if alpha == 1.0:
        return 0.5
    return 0.5 + math.atan(beta * math.tan(math.pi * alpha / 2.0)) / (math.pi * alpha)


def canonical_scale(alpha: float, beta: float = 0.0) -> float:
    """Scale c reached by S_n / c_n when c_n solves n * mu(c_n) = 1.

    Such a normalization forces the Levy tail constants of the limit to add up
    to 2 - alpha, which fixes c in closed form.  For alpha = 2 the limit is the
    standard normal.
    """
    if not is_admissible(alpha, beta):
        raise DomainError(f"(alpha, beta) = ({alpha}, {beta}) is not admissible")
    if alpha == 2.0:
        return 0.5
    if alpha == 1.0:
        return math.pi / 2.0
    return (2.0 - alpha) * math.gamma(1.0 - alpha) / alpha * math.cos(math.pi * alpha / 2.0)


@dataclass(frozen=True)
class StableParams:
    """Exponent, skewness and scale of a strictly stable law."""

    alpha: float
    beta: float = 0.0
    scale_c: float = 1.0
    rho: float = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "scale_c", float(self.scale_c))
        if not self.scale_c > 0.0:
            raise DomainError(f"scale_c must be positive, got {self.scale_c}")
        object.__setattr__(self, "rho", rho_from(self.alpha, self.beta))

    @classmethod
    def canonical(cls, alpha: float, beta: float = 0.0) -> StableParams:
        return cls(alpha, beta, canonical_scale(alpha, beta))

    @property
    def cutoff(self) -> float:
        """Frequency T beyond which |G(t)| < 1e-16."""
        return (_CF_CUTOFF / self.scale_c) ** (1.0 / self.alpha)

    def tail_constants(self) -> tuple[float, float]:
        """Constants (C+, C-) with g(x) ~ C+ x^{-1-alpha} and g(-x) ~ C- x^{-1-alpha}.

        Both are zero for the Gaussian case.
        """
        if self.alpha == 2.0:
            return 0.0, 0.0
        if self.alpha == 1.0:
            total = 2.0 * self.scale_c / math.pi
        else:
            total = self.scale_c / (
                math.gamma(1.0 - self.alpha) / self.alpha * math.cos(math.pi * self.alpha / 2.0)
            )
        return total * (1.0 + self.beta) / 2.0, total * (1.0 - self.beta) / 2.0


def stable_cf(params: StableParams, t: ArrayLike) -> NDArray[np.complex128] | complex:
    """Characteristic function exp{-c|t|^a (1 - i b sign(t) tan(pi a / 2))}."""
    t_arr = np.asarray(t, dtype=float)
    skew = 0.0 if params.alpha == 1.0 else params.beta * math.tan(math.pi * params.alpha / 2.0)
    power = params.scale_c * np.abs(t_arr) ** params.alpha
    value = np.exp(-power + 1j * power * skew * np.sign(t_arr))
    return complex(value) if value.ndim == 0 else value


def _nodes(params: StableParams, n_panels: int) -> tuple[NDArray, NDArray]:
    """Composite Gauss-Legendre rule on [0, T], graded towards t = 0."""
    top = params.cutoff
    first = top / n_panels
    graded = first * np.geomspace(1e-12, 1.0, 28)
    breaks = np.concatenate([[0.0], graded[:-1], np.linspace(first, top, n_panels + 1)])
    lo, hi = breaks[:-1], breaks[1:]
    half = (hi - lo)[:, None] / 2.0
    nodes = (lo[:, None] + half * (1.0 + _GL_NODES[None, :])).ravel()
    weights = (half * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def _integrate(params: StableParams, x: NDArray, n_panels: int) -> NDArray:
    t, w = _nodes(params, n_panels)
    power = params.scale_c * t**params.alpha
    skew = 0.0 if params.alpha == 1.0 else params.beta * math.tan(math.pi * params.alpha / 2.0)
    damp = w * np.exp(-power) / math.pi
    phase = skew * power
    out = np.empty_like(x)
    chunk = max(1, 4_000_000 // t.size)
    for start in range(0, x.size, chunk):
        xs = x[start:start + chunk]
        out[start:start + chunk] = np.cos(phase[None, :] - xs[:, None] * t[None, :]) @ damp
    return out


def stable_density(
    params: StableParams, x: ArrayLike, tol: float = 1e-9, max_panels: int = 1 << 13
) -> NDArray[np.float64] | float:
    """Density g(x) by Fourier inversion of the characteristic function.

    The panel count doubles until two successive refinements agree to `tol`.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    freq = max(1.0, float(np.max(np.abs(x_arr))) if x_arr.size else 1.0)
    n_panels = max(16, int(2 ** math.ceil(math.log2(freq * params.cutoff / 8.0 + 1.0))))
    previous = _integrate(params, x_arr, n_panels)
    while True:
        n_panels *= 2
        current = _integrate(params, x_arr, n_panels)
        err = float(np.max(np.abs(current - previous)))
        if err < tol:
            break
        if n_panels >= max_panels:
            raise QuadratureError("stable density quadrature did not converge", err)
        previous = current
    if np.any(current < -tol):
        raise QuadratureError("density estimate is negative beyond tolerance", float(-current.min()))
    current = np.maximum(current, 0.0)
    return float(current[0]) if np.ndim(x) == 0 else current


@lru_cache(maxsize=256)
def stable_density_at_zero(params: StableParams) -> float:
    return float(stable_density(params, 0.0))
