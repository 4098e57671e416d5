"""Limit density of S_n / c_n given survival: closed form and fixed-point solver.

The fixed-point map is

    p(z) <- int_0^1 t^{rho - 1 - 1/alpha} F(z, t) dt,
    F(z, t) = int_0^{z/s} g(w) p((z - s w) / tau) dw,   tau = t^{1/alpha}, s = (1-t)^{1/alpha},

which is the usual double integral after the change of variables
w = (z - tau u) / s.  With p piecewise linear on the grid, F is an exact
combination of the antiderivatives of g and w g, so only the outer t-integral
needs quadrature.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .stable import QuadratureError, StableParams, stable_density

Z_MAX = 6.0
_GL8 = np.polynomial.legendre.leggauss(8)
_GL3 = np.polynomial.legendre.leggauss(3)
# segments narrower than this are integrated by Gauss rule instead of antiderivative differences
_NARROW = 0.05


def meander_density_normal(x: ArrayLike):
    """x exp(-x^2 / 2) for x > 0, zero otherwise."""
    arr = np.asarray(x, dtype=float)
    out = np.where(arr > 0, arr * np.exp(-np.square(arr) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- antiderivatives of g


@dataclass(frozen=True)
class _Antiderivatives:
    """G0(w) = int_0^w g and G1(w) = int_0^w y g(y) dy for w >= 0."""

    params: StableParams
    w_top: float
    g0: CubicHermiteSpline | None
    g1: CubicHermiteSpline | None
    g0_top: float
    g1_top: float
    c_plus: float
    g: CubicSpline | None = None

    @classmethod
    def build(cls, params: StableParams, w_top: float = 60.0, step: float = 0.01) -> _Antiderivatives:
        c_plus = params.tail_constants()[0]
        if params.alpha == 2.0 and params.scale_c == 0.5:
            return cls(params, math.inf, None, None, 0.5, 1.0 / math.sqrt(2 * math.pi), 0.0)
        w = np.linspace(0.0, w_top, int(round(w_top / step)) + 1)
        g = np.asarray(stable_density(params, w))
        G0 = integrate.cumulative_simpson(g, x=w, initial=0.0)
        G1 = integrate.cumulative_simpson(w * g, x=w, initial=0.0)
        return cls(
            params, w_top, CubicHermiteSpline(w, G0, g), CubicHermiteSpline(w, G1, w * g),
            float(G0[-1]), float(G1[-1]), c_plus, CubicSpline(w, g),
        )

    def density(self, w: NDArray) -> NDArray:
        if self.g is None:
            return np.exp(-w * w / 2.0) / math.sqrt(2.0 * math.pi)
        inside = w <= self.w_top
        tail = self.c_plus * np.where(inside, 1.0, w) ** (-1.0 - self.params.alpha)
        return np.where(inside, self.g(np.minimum(w, self.w_top)), tail)

    def __call__(self, w: NDArray) -> tuple[NDArray, NDArray]:
        w = np.maximum(w, 0.0)
        if self.g0 is None:
            # standard normal: closed forms
            return 0.5 * special.erf(w / math.sqrt(2.0)), (1.0 - np.exp(-w * w / 2.0)) / math.sqrt(2.0 * math.pi)
        a = self.params.alpha
        inside = w <= self.w_top
        wi = np.where(inside, w, self.w_top)
        G0, G1 = self.g0(wi), self.g1(wi)
        if not inside.all():
            wo = np.where(inside, self.w_top, w)
            # Pareto-type right tail g(y) ~ C+ y^{-1-alpha}
            G0 = np.where(inside, G0, self.g0_top + self.c_plus / a * (self.w_top**-a - wo**-a))
            G1 = np.where(inside, G1, self.g1_top + self.c_plus / (a - 1.0) * (self.w_top ** (1 - a) - wo ** (1 - a)))
        return G0, G1


# ---------------------------------------------------------------- kernel assembly


def _graded_rule(lo: float, hi: float, n_geo: int, n_uni: int, ratio: float = 1e-8):
    """Gauss-Legendre panels on [lo, hi], geometrically refined towards lo."""
    span = hi - lo
    geo = lo + span * np.geomspace(ratio, 1.0 / n_uni, n_geo)
    breaks = np.unique(np.concatenate([[lo], geo, np.linspace(lo + span / n_uni, hi, n_uni)]))
    a, b = breaks[:-1], breaks[1:]
    half = (b - a)[:, None] / 2.0
    x = (a[:, None] + half * (1.0 + _GL8[0][None, :])).ravel()
    wts = (half * _GL8[1][None, :]).ravel()
    return x, wts


@dataclass(frozen=True)
class QuadSpec:
    t_split: float = 0.5
    n_geo: int = 24
    n_uni: int = 8


def _outer_nodes(params: StableParams, spec: QuadSpec, t_lo: float = 0.0, t_hi: float = 1.0):
    """(tau, s, weight) for int_{t_lo}^{t_hi} t^{rho-1-1/alpha} (.) dt, tau = t^{1/alpha}, s = (1-t)^{1/alpha}."""
    a, r = params.alpha, params.rho
    taus, ss, weights = [], [], []
    split = min(max(spec.t_split, t_lo), t_hi)
    if split > t_lo:
        # v = t^rho turns t^{rho-1} dt into dv / rho
        v, wv = _graded_rule(t_lo**r, split**r, spec.n_geo, spec.n_uni)
        t = v ** (1.0 / r)
        taus.append(t ** (1.0 / a))
        ss.append((1.0 - t) ** (1.0 / a))
        weights.append(wv / r * t ** (-1.0 / a))
    if t_hi > split:
        # s = (1 - t)^{1/alpha}: dt = alpha s^{alpha-1} ds, bounded near t = 1
        s, ws = _graded_rule((1.0 - t_hi) ** (1.0 / a), (1.0 - split) ** (1.0 / a), spec.n_geo, spec.n_uni)
        t = 1.0 - s**a
        taus.append(t ** (1.0 / a))
        ss.append(s)
        weights.append(ws * a * s ** (a - 1.0) * t ** (r - 1.0 - 1.0 / a))
    return np.concatenate(taus), np.concatenate(ss), np.concatenate(weights)


def _segment_weights(z: NDArray, tau: float, s: float, u: NDArray, anti: _Antiderivatives):
    """Hat-basis weights of F(z, t): F = left @ p[:-1] + right @ p[1:] per row of z."""
    w = (z[:, None] - tau * u[None, :]) / s  # decreasing along u
    w_hi, w_lo = w[:, :-1], w[:, 1:]
    # computed directly: the difference w_hi - w_lo cancels catastrophically for small tau
    width = np.broadcast_to(tau * np.diff(u)[None, :] / s, w_hi.shape)
    G0, G1 = anti(w.ravel())
    G0, G1 = G0.reshape(w.shape), G1.reshape(w.shape)
    m0 = G0[:, :-1] - G0[:, 1:]
    # int g(w) (w_hi - w) / width over the part with w >= 0 (m0 = m1 = 0 when w_hi <= 0)
    lam = (w_hi * m0 - (G1[:, :-1] - G1[:, 1:])) / width
    narrow = (width < _NARROW) & (w_hi > 0)
    if narrow.any():
        hi, wd = w_hi[narrow], width[narrow]
        half = np.where(w_lo[narrow] < 0, hi, wd)[:, None] / 2.0
        x = hi[:, None] - half * (1.0 - _GL3[0][None, :])
        gx = anti.density(x) * (_GL3[1][None, :] * half)
        m0[narrow] = gx.sum(axis=1)
        lam[narrow] = (gx * half * (1.0 - _GL3[0][None, :])).sum(axis=1) / wd[:, None].ravel()
    return m0 - lam, lam


def kernel_matrix(params: StableParams, grid: NDArray, spec: QuadSpec = QuadSpec(), anti=None) -> NDArray:
    """Matrix K with (K p)_i = value of the fixed-point map at grid[i]."""
    anti = anti or _Antiderivatives.build(params)
    taus, ss, wts = _outer_nodes(params, spec)
    z = grid[1:]
    K = np.zeros((len(grid), len(grid)))
    for tau, s, wt in zip(taus, ss, wts):
        left, right = _segment_weights(z, tau, s, grid, anti)
        K[1:, :-1] += wt * left
        K[1:, 1:] += wt * right
    return K


# ---------------------------------------------------------------- density objects


def default_grid(alpha: float, z_max: float = Z_MAX) -> NDArray[np.float64]:
    """Geometric spacing below 0.5, uniform on [0.5, z_max]; heavy tails get a geometric extension."""
    parts = [[0.0], np.geomspace(1e-5, 0.5, 90, endpoint=False), np.linspace(0.5, z_max, int(round((z_max - 0.5) / 0.05)) + 1)]
    if alpha < 2.0:
        parts.append(np.geomspace(z_max, 60.0 * z_max, 60)[1:])
    return np.concatenate(parts)


def _trapezoid_mass(z: NDArray, p: NDArray, top: float = math.inf) -> float:
    keep = z <= top + 1e-12
    return float(np.trapezoid(p[keep], z[keep]))


@dataclass
class MeanderDensity:
    params: StableParams
    z_grid: NDArray[np.float64]
    p_values: NDArray[np.float64]
    z_max: float = Z_MAX
    quad_spec: QuadSpec = field(default_factory=QuadSpec)
    residual: float = math.nan
    iterations: int = 0
    tol: float = math.nan
    converged: bool = True

    @classmethod
    def from_function(cls, params: StableParams, z_grid: ArrayLike, func, z_max: float = Z_MAX) -> MeanderDensity:
        z = np.asarray(z_grid, dtype=float)
        return cls(params, z, np.asarray(func(z), dtype=float), z_max=z_max)

    def __call__(self, z: ArrayLike):
        return np.interp(z, self.z_grid, self.p_values, right=0.0)

    def mass(self, top: float | None = None) -> float:
        return _trapezoid_mass(self.z_grid, self.p_values, self.z_max if top is None else top)

    def bin_masses(self, edges: ArrayLike) -> NDArray[np.float64]:
        """Integral of the interpolated density over consecutive bins."""
        edges = np.asarray(edges, dtype=float)
        pts = np.unique(np.concatenate([edges, self.z_grid[(self.z_grid > edges[0]) & (self.z_grid < edges[-1])]]))
        vals = self(pts)
        cum = np.concatenate([[0.0], np.cumsum((vals[1:] + vals[:-1]) / 2.0 * np.diff(pts))])
        at = np.interp(edges, pts, cum)
        return np.diff(at)

    def to_csv(self, path: str | Path, residuals: NDArray | None = None) -> None:
        res = residuals if residuals is not None else np.full(len(self.z_grid), self.residual)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["z", "p", "residual"])
            for z, p, r in zip(self.z_grid, self.p_values, res):
                out.writerow([repr(float(z)), repr(float(p)), repr(float(r))])

    def metadata(self) -> dict:
        return {
            "params": {"alpha": self.params.alpha, "beta": self.params.beta, "scale_c": self.params.scale_c},
            "iterations": self.iterations,
            "tol": self.tol,
            "converged": self.converged,
            "residual": self.residual,
            "z_max": self.z_max,
            "quad_spec": asdict(self.quad_spec),
        }

    def write_metadata(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.metadata(), indent=2))


def _check_params(params: StableParams) -> None:
    if not 1.0 < params.alpha <= 2.0:
        raise ValueError("the fixed-point solver supports 1 < alpha <= 2 only")


def f_kernel(w1: float, w2: float, v: float, p: MeanderDensity, epsabs: float = 1e-12) -> float:
    """int_{w1}^{w2} t^{rho-1-1/alpha} F(v, t) dt with p interpolated on its grid."""
    if not 0.0 <= w1 <= w2 <= 1.0:
        raise ValueError("need 0 <= w1 <= w2 <= 1")
    if w1 == w2 or v <= 0.0:
        return 0.0
    params = p.params
    _check_params(params)
    anti = _anti_cache(params)
    a, r = params.alpha, params.rho
    z = np.array([float(v)])

    def F(t: float, s: float | None = None) -> float:
        s = (1.0 - t) ** (1.0 / a) if s is None else s
        left, right = _segment_weights(z, t ** (1.0 / a), s, p.z_grid, anti)
        return float(left[0] @ p.p_values[:-1] + right[0] @ p.p_values[1:])

    def in_v(x: float) -> float:
        return F(x ** (1 / r)) * x ** (-1 / (a * r)) / r if x > 0 else 0.0

    def in_s(sv: float) -> float:
        t = 1.0 - sv**a
        return a * sv ** (a - 1) * t ** (r - 1 - 1 / a) * F(t, sv) if sv > 0 else 0.0

    # near t = 0 integrate in v = t^rho, near t = 1 in s = (1 - t)^{1/alpha}
    split = min(max(0.5, w1), w2)
    pieces = []
    if split > w1:
        pieces.append((in_v, w1**r, split**r))
    if w2 > split:
        pieces.append((in_s, (1 - w2) ** (1 / a), (1 - split) ** (1 / a)))
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        # kinks wherever a grid node crosses trigger roundoff warnings; the estimate is checked below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for func, lo, hi in pieces:
            val, e = integrate.quad(func, lo, hi, epsabs=epsabs, epsrel=1e-12, limit=400)
            total, err = total + val, err + e
    if err > max(1e-7, 1e-6 * abs(total)):
        raise QuadratureError(f"f_kernel quadrature did not converge at v={v}", err)
    return total


_ANTI: dict[StableParams, _Antiderivatives] = {}


def _anti_cache(params: StableParams) -> _Antiderivatives:
    if params not in _ANTI:
        _ANTI[params] = _Antiderivatives.build(params)
    return _ANTI[params]


def _normalize(z: NDArray, p: NDArray) -> NDArray:
    return p / _trapezoid_mass(z, p)


def meander_fixed_point(
    params: StableParams,
    z_grid: ArrayLike | None = None,
    max_iters: int = 2000,
    tol: float = 1e-10,
    initial: str = "shape",
    spec: QuadSpec = QuadSpec(),
    z_max: float = Z_MAX,
) -> MeanderDensity:
    """Iterate p <- normalize(K p) from z^{alpha rho} e^{-z^2/2} ("shape") or uniform on [0, 3]."""
    _check_params(params)
    z = default_grid(params.alpha, z_max) if z_grid is None else np.asarray(z_grid, dtype=float)
    K = kernel_matrix(params, z, spec, _anti_cache(params))
    if initial == "shape":
        p = z ** (params.alpha * params.rho) * np.exp(-z * z / 2.0)
    elif initial == "uniform":
        p = np.where(z <= 3.0, 1.0, 0.0)
    else:
        raise ValueError("initial must be 'shape' or 'uniform'")
    p = _normalize(z, p)
    residual, converged, it = math.inf, False, 0
    for it in range(1, max_iters + 1):
        new = _normalize(z, np.maximum(K @ p, 0.0))
        residual = float(np.max(np.abs(new - p)))
        p = new
        if residual < tol:
            converged = True
            break
    return MeanderDensity(params, z, p, z_max, spec, residual, it, tol, converged)


def fixed_point_residuals(density: MeanderDensity, points: ArrayLike) -> NDArray[np.float64]:
    """|f(0, 1; z) - p(z)| at the given points, with f evaluated adaptively."""
    pts = np.asarray(points, dtype=float)
    return np.array([abs(f_kernel(0.0, 1.0, float(v), density) - float(density(v))) for v in pts])


def small_z_exponent(p: MeanderDensity, z_lo: float = 1e-3, z_hi: float = 5e-2) -> float:
    """Least-squares slope of log p against log z on the grid points in [z_lo, z_hi]."""
    z, v = p.z_grid, p.p_values
    keep = (z >= z_lo) & (z <= z_hi)
    if keep.sum() < 10:
        raise ValueError("need at least 10 grid points in the fitting window")
    if np.any(v[keep] <= 0):
        raise ValueError("density is not positive on the fitting window")
    return float(np.polyfit(np.log(z[keep]), np.log(v[keep]), 1)[0])


def envelope_constant(p: MeanderDensity) -> float:
    """Smallest C with p(z) <= C min(1, z^{alpha rho}) on the grid."""
    z, v = p.z_grid[1:], p.p_values[1:]
    env = np.minimum(1.0, z ** (p.params.alpha * p.params.rho))
    return float(np.max(v / env))
