"""Truncated power series and ladder-epoch laws from positivity probabilities."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

DEFAULT_ORDER = 512
_FLUSH = 1e-300


def _flush(c: NDArray) -> NDArray:
    c = c.copy()
    c[np.abs(c) < _FLUSH] = 0.0
    return c


@dataclass(frozen=True)
class PowerSeries:
    """Coefficients c_0..c_N of a series truncated at order N."""

    coeffs: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _flush(np.asarray(self.coeffs, dtype=float)))

    @classmethod
    def from_coeffs(cls, coeffs: ArrayLike, order: int | None = None) -> PowerSeries:
        c = np.asarray(coeffs, dtype=float)
        if order is not None:
            c = np.concatenate([c[: order + 1], np.zeros(max(0, order + 1 - len(c)))])
        return cls(c)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k: int) -> float:
        return float(self.coeffs[k])

    def __mul__(self, other: PowerSeries) -> PowerSeries:
        return series_mul(self, other)


def series_mul(a: PowerSeries, b: PowerSeries) -> PowerSeries:
    if a.order != b.order:
        raise ValueError("series orders differ")
    return PowerSeries(np.convolve(a.coeffs, b.coeffs)[: a.order + 1])


def series_exp(a: PowerSeries) -> PowerSeries:
    """exp(a) for a_0 = 0 via n e_n = sum_{k=1}^n k a_k e_{n-k}."""
    if a.coeffs[0] != 0.0:
        raise ValueError("series_exp needs a zero constant term")
    N = a.order
    ka = np.arange(N + 1) * a.coeffs
    e = np.zeros(N + 1)
    e[0] = 1.0
    for n in range(1, N + 1):
        e[n] = ka[1:n + 1] @ e[n - 1::-1] / n
    return PowerSeries(e)


def series_log(a: PowerSeries) -> PowerSeries:
    """log(a) for a_0 = 1 via n a_n = n l_n + sum_{k=1}^{n-1} k l_k a_{n-k}."""
    if a.coeffs[0] != 1.0:
        raise ValueError("series_log needs a unit constant term")
    N = a.order
    c = a.coeffs
    kl = np.zeros(N + 1)
    for n in range(1, N + 1):
        kl[n] = n * c[n] - kl[1:n] @ c[n - 1:0:-1]
    out = np.zeros(N + 1)
    out[1:] = kl[1:] / np.arange(1, N + 1)
    return PowerSeries(out)


def _checked(q: Sequence[float], N: int | None) -> NDArray[np.float64]:
    q = np.asarray(q, dtype=float)
    if N is not None:
        if len(q) < N:
            raise ValueError(f"need {N} positivity values, got {len(q)}")
        q = q[:N]
    if np.any((q < 0.0) | (q > 1.0)) or np.any(~np.isfinite(q)):
        raise ValueError("positivity probabilities must lie in [0, 1]")
    return q


def tau_pmf_from_positivity(q: Sequence[float], N: int | None = None, sign: str = "minus") -> NDArray[np.float64]:
    """P(tau = n), n = 1..N, from 1 - E z^tau = exp(-sum_n q_n z^n / n).

    With sign="minus", q_n = P(S_n <= 0) and tau is the weak descending epoch;
    with sign="plus", q_n = P(S_n > 0) and tau is the strict ascending epoch.
    """
    if sign not in ("plus", "minus"):
        raise ValueError("sign must be 'plus' or 'minus'")
    q = _checked(q, N)
    n = len(q)
    exponent = np.zeros(n + 1)
    exponent[1:] = -q / np.arange(1, n + 1)
    pmf = -series_exp(PowerSeries(exponent)).coeffs[1:]
    return np.clip(pmf, 0.0, 1.0) + 0.0  # + 0.0 turns -0.0 into 0.0


def tau_pmf_errors(q: Sequence[float], q_se: Sequence[float], N: int | None = None) -> NDArray[np.float64]:
    """First-order standard errors of tau_pmf_from_positivity.

    d e_n / d q_k = -e_{n-k} / k, with the q_k treated as independent.
    """
    q = _checked(q, N)
    se = np.asarray(q_se, dtype=float)[: len(q)]
    n = len(q)
    exponent = np.zeros(n + 1)
    exponent[1:] = -q / np.arange(1, n + 1)
    e = series_exp(PowerSeries(exponent)).coeffs
    weights = (se / np.arange(1, n + 1)) ** 2
    var = np.array([weights[:m] @ e[m - 1::-1][:m] ** 2 for m in range(1, n + 1)])
    return np.sqrt(var)


def verify_factorization(pmf_plus: Sequence[float], pmf_minus: Sequence[float], N: int | None = None) -> float:
    """max |[z^n] (1 - E z^{tau+})(1 - E z^{tau-}) - (1 - z)| over n <= N."""
    return float(np.max(np.abs(factorization_residuals(pmf_plus, pmf_minus, N))))


def factorization_residuals(pmf_plus, pmf_minus, N: int | None = None) -> NDArray[np.float64]:
    plus, minus = np.asarray(pmf_plus, dtype=float), np.asarray(pmf_minus, dtype=float)
    N = N or min(len(plus), len(minus))
    a = PowerSeries(np.concatenate([[1.0], -plus[:N]]))
    b = PowerSeries(np.concatenate([[1.0], -minus[:N]]))
    target = np.zeros(N + 1)
    target[:2] = [1.0, -1.0]
    return series_mul(a, b).coeffs - target


def tau_tail(pmf: Sequence[float], N: int | None = None) -> NDArray[np.float64]:
    """P(tau > n), n = 1..N."""
    p = np.asarray(pmf, dtype=float)[:N]
    return np.clip(1.0 - np.cumsum(p), 0.0, 1.0)


def spitzer_averages(q_plus: Sequence[float]) -> NDArray[np.float64]:
    """Running means (1/n) sum_{k<=n} P(S_k > 0)."""
    q = np.asarray(q_plus, dtype=float)
    return np.cumsum(q) / np.arange(1, len(q) + 1)


def write_csv(path: str | Path, pmf_plus, pmf_minus) -> None:
    plus, minus = np.asarray(pmf_plus), np.asarray(pmf_minus)
    N = min(len(plus), len(minus))
    resid = factorization_residuals(plus, minus, N)
    tp, tm = tau_tail(plus, N), tau_tail(minus, N)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["n", "pmf_plus", "pmf_minus", "tail_plus", "tail_minus", "factorization_residual"])
        for n in range(1, N + 1):
            out.writerow([n, repr(plus[n - 1]), repr(minus[n - 1]), repr(tp[n - 1]), repr(tm[n - 1]), repr(resid[n])])
