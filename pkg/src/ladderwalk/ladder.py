"""Ladder heights, renewal function, descent moment and the Q_n sequence."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import fft as sp_fft
from scipy import special

from . import dp
from .stable import stable_density_at_zero
from .steps import StepModel, ZetaLaw, norm_seq

_BOUNDARY_SLACK = 0.05


def _units(model: StepModel) -> tuple[int, int, float]:
    """(p, q, delta): every reachable position is a multiple of delta = h / q."""
    lat = model.require_lattice()
    if not isinstance(lat.ratio, Fraction):
        raise ValueError("ladder computations need a rational lattice ratio")
    return lat.ratio.numerator, lat.ratio.denominator, lat.span_h / lat.ratio.denominator


# ---------------------------------------------------------------- ladder heights


@dataclass(frozen=True)
class LadderHeights:
    """pmf of the first strict ascending ladder height on the grid delta * m, m >= 1.

    `probs[m - 1]` is P(chi = m * delta, tau+ <= n_max).  `defect_time` is
    P(tau+ > n_max) and `beyond` the mass of heights above the grid.
    """

    delta: float
    probs: NDArray[np.float64]
    defect_time: float
    beyond: float
    n_max: int

    @property
    def defect(self) -> float:
        return self.defect_time + self.beyond

    def pmf(self) -> dict[float, float]:
        return {self.delta * (m + 1): float(p) for m, p in enumerate(self.probs) if p > 0}

    @property
    def min_unit(self) -> int:
        nz = np.nonzero(self.probs)[0]
        return int(nz[0]) + 1 if nz.size else 1


def ladder_height_pmf(model: StepModel, n_max: int = 4096, x_max: float | None = None) -> LadderHeights:
    """Law of the first positive value of the walk, by DP on paths kept in (-inf, 0].

    Mass that can no longer reach (0, inf) within n_max steps is dropped, and
    counted in defect_time together with paths still alive at n_max.
    """
    p, q, delta = _units(model)
    if isinstance(model.law, ZetaLaw):
        return _ladder_heights_heavy(model.law, n_max, x_max if x_max is not None else 4096.0)
    k_min, step = model.k_min, model.probs
    k_max = k_min + len(step) - 1
    ratio = model.require_lattice().ratio
    x_max = x_max if x_max is not None else max(64.0 * delta, 4.0 * delta * (p + q * max(k_max, 1)))
    top_unit = int(math.floor(x_max / delta + 1e-9))
    heights = np.zeros(top_unit)
    beyond = 0.0
    state, hi = np.array([1.0]), 0  # offsets lo..hi with hi the largest stored offset
    for n in range(1, n_max + 1):
        new, _ = dp._convolve(state, step)
        new_hi = hi + k_max
        new_lo = new_hi - len(new) + 1
        first_pos = dp.first_alive(ratio, n)
        n_pos = max(0, new_hi - first_pos + 1)
        if n_pos:
            pos = new[len(new) - n_pos:]
            units = p * n + q * (first_pos + np.arange(n_pos))
            inside = units <= top_unit
            np.add.at(heights, units[inside] - 1, pos[inside])
            beyond += math.fsum(pos[~inside])
            new = new[: len(new) - n_pos]
            new_hi = first_pos - 1
        if len(new) == 0:
            state = new
            break
        # positions that cannot climb back above zero in the remaining steps
        reach = dp.first_alive(ratio, n_max) - (n_max - n) * max(k_max, 0)
        new = new[max(0, reach - new_lo):]
        new_lo = max(new_lo, reach)
        low_mass = np.cumsum(new)
        n_drop = int(np.searchsorted(low_mass, 1e-16, side="right"))
        state, hi = new[n_drop:], new_hi
        if len(state) == 0:
            break
    defect_time = max(0.0, 1.0 - math.fsum(heights) - beyond)
    return LadderHeights(delta, heights, defect_time, beyond, n_max)


def _ladder_heights_heavy(law: ZetaLaw, n_max: int, x_max: float, depth: int | None = None) -> LadderHeights:
    """Ladder heights of an integer walk with untruncated heavy-tailed steps.

    Truncating the step law would forbid the large overshoots that shape H, so
    the full law is used and the killed walk is instead confined to
    [-depth, 0]; mass jumping below -depth joins the defect.
    """
    top = int(math.floor(x_max + 1e-9))
    depth = depth if depth is not None else max(4096, top)
    # kernel on offsets -(depth + top) .. (depth + top) covers every transition we keep
    k = depth + top
    _, kernel = law.weights(k)
    state = np.zeros(depth + 1)  # state[i] = mass at position i - depth
    state[depth] = 1.0
    heights = np.zeros(top)
    beyond = 0.0
    for n in range(1, n_max + 1):
        nz = np.nonzero(state > 0)[0]
        if nz.size == 0:
            break
        lo = int(nz[0])
        live = state[lo:]
        new, _ = dp._convolve(live, kernel)
        # new[j] is the mass at position (lo - depth) - k + j
        base = lo - depth - k
        pos_start = 1 - base
        heights += new[pos_start:pos_start + top]
        # overshoot beyond the grid: P(X > top - z) summed against the state
        zs = np.arange(lo, depth + 1) - depth
        beyond += float(live @ _zeta_right_tail(law, top - zs))
        keep_start = -depth - base
        state = new[keep_start:keep_start + depth + 1].copy()
        state[state < 1e-300] = 0.0
    defect_time = max(0.0, 1.0 - math.fsum(heights) - beyond)
    return LadderHeights(1.0, heights, defect_time, beyond, n_max)


def _zeta_right_tail(law: ZetaLaw, m: NDArray[np.int64]) -> NDArray[np.float64]:
    """P(X > m) for integers m >= 0 (shifted atoms included)."""
    m = np.asarray(m)
    tail = law.p * special.zeta(law.alpha + 1.0, m + 1.0) / law.zeta
    # the +1 atom carries -atom_shift relative to the pure zeta weight
    return np.where(m < 1, tail - law.atom_shift, tail)


# ---------------------------------------------------------------- renewal function


def _renewal_measure(f: NDArray[np.float64], size: int) -> NDArray[np.float64]:
    """U_0 = 1, U_j = sum_{i=1}^{j} f_i U_{j-i}; f[i-1] is the mass at unit i."""
    u = np.zeros(size)
    u[0] = 1.0
    fr = np.zeros(size)
    m = min(len(f), size - 1)
    fr[1:m + 1] = f[:m]
    for j in range(1, size):
        u[j] = fr[1:j + 1] @ u[j - 1::-1]
    return u


@dataclass(frozen=True)
class RenewalFunction:
    """H(u) = U([0, u)) for u > 0 on the grid delta * j, with defect bounds.

    `point` renews with the ladder law renormalized to total mass one, `low`
    with the defective law and `high` with the defect moved to the smallest
    ladder height, so low <= point <= high and low <= H <= high.
    """

    delta: float
    point: NDArray[np.float64]
    low: NDArray[np.float64]
    high: NDArray[np.float64]

    @property
    def u_max(self) -> float:
        return self.delta * (len(self.point) - 1)

    def _index(self, u: NDArray) -> NDArray[np.int64]:
        # number of grid points j * delta strictly below u
        ratio = u / self.delta
        near = np.rint(ratio)
        exact = np.isclose(ratio, near, rtol=0, atol=1e-9)
        count = np.where(exact, near, np.ceil(ratio)).astype(np.int64)
        if np.any(count > len(self.point)):
            raise ValueError(f"renewal grid covers u <= {self.u_max}, asked for {float(np.max(u))}")
        return count

    def _eval(self, cum: NDArray, u) -> NDArray | float:
        arr = np.asarray(u, dtype=float)
        idx = self._index(np.atleast_1d(arr))
        padded = np.concatenate([[0.0], cum])
        out = np.where(np.atleast_1d(arr) > 0, padded[idx], 0.0)
        return float(out[0]) if arr.ndim == 0 else out

    def __call__(self, u):
        return self._eval(np.cumsum(self.point), u)

    def bounds(self, u):
        return self._eval(np.cumsum(self.low), u), self._eval(np.cumsum(self.high), u)

    def at_units(self, m: int) -> float:
        """H(m * delta) with exact strictness."""
        return float(np.sum(self.point[:m])) if m > 0 else 0.0

    def integral(self, x: float, width: float = 1.0) -> float:
        """Integral of the step function H over [x, x + width]."""
        a, b = x, x + width
        cum = np.cumsum(self.point)
        j_lo = int(math.floor(a / self.delta))
        j_hi = int(math.ceil(b / self.delta))
        total = 0.0
        for j in range(j_lo, j_hi):
            lo, hi = max(a, j * self.delta), min(b, (j + 1) * self.delta)
            if hi > lo:
                # H = cum[j] on (j delta, (j+1) delta]
                total += (hi - lo) * (cum[j] if j >= 0 else 0.0)
        return total

    def small_deviation_constant(self, x: float) -> float:
        """I(x) = int_x^{x+1} H - H(x)."""
        return self.integral(x, 1.0) - float(self(x))

    def to_csv(self, path: str | Path, u_grid) -> None:
        lo, hi = self.bounds(np.asarray(u_grid, dtype=float))
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["u", "H_low", "H_high"])
            for u, a, b in zip(u_grid, np.atleast_1d(lo), np.atleast_1d(hi)):
                out.writerow([repr(float(u)), repr(float(a)), repr(float(b))])


def renewal_function(chi: LadderHeights, u_max: float | None = None) -> RenewalFunction:
    """Renewal measure of the ladder heights on [0, u_max] with defect bounds."""
    size = len(chi.probs) + 1 if u_max is None else int(math.floor(u_max / chi.delta + 1e-9)) + 1
    if size > len(chi.probs) + 1:
        raise ValueError("ladder heights are not tabulated far enough for the requested u_max")
    if chi.defect > 0.5:
        raise ValueError(f"ladder-height defect {chi.defect:.3g} is too large for a renewal bound")
    total = math.fsum(chi.probs)
    point = _renewal_measure(chi.probs / total, size)
    low = _renewal_measure(chi.probs, size)
    boosted = chi.probs.copy()
    boosted[chi.min_unit - 1] += chi.defect
    high = _renewal_measure(boosted, size)
    return RenewalFunction(chi.delta, point, low, high)


def renewal_via_duality(
    model: StepModel, x: float, J: int = 400, table: dp.SurvivalTable | None = None
) -> tuple[float, float]:
    """Interval [low, high] for H(x) from 1 + sum_j P(0 < S_j < x, tau- > j).

    `low` is the partial sum up to J.  The tail beyond J is bounded by fitting
    a power law to block sums over the last half of the range and summing
    its extrapolation; a fitted decay no faster than 1/j gives high = inf.
    """
    table = table if table is not None and table.N >= J else dp.survival_table(model, J)
    terms = np.array([table.B(j, x) for j in range(1, J + 1)])
    low = 1.0 + math.fsum(terms)
    if terms[-J // 2:].max() == 0.0:
        return low, low
    _, q, _ = _units(model)
    block = 2 * q
    half = J // 2
    n_blocks = (J - half) // block
    if n_blocks < 4:
        return low, math.inf
    start = J - n_blocks * block
    sums = terms[start:].reshape(n_blocks, block).sum(axis=1)
    mids = start + block * (np.arange(n_blocks) + 0.5)
    if np.any(sums <= 0):
        return low, math.inf
    slope, intercept = np.polyfit(np.log(mids), np.log(sums), 1)
    gamma = -slope
    if gamma <= 1.0:
        return low, math.inf
    # Tail of block sums: per-index decay j^{-gamma}; take the more generous of
    # the fit and a worst-case constant matched at the last block.
    amp = max(math.exp(intercept), float(np.max(sums * mids**gamma))) / block
    tail = amp * J ** (1.0 - gamma) / (gamma - 1.0)
    return low, low + tail


def _wh_renewal_units(units: NDArray[np.int64], probs: NDArray, size: int, s: float) -> NDArray[np.float64]:
    """Strict ascending ladder renewal masses U_s(j), j = 0..size/2 - 1, of an integer walk.

    Wiener-Hopf: 1 / (1 - E[s^tau e^{i theta chi}]) = exp(-sum_{x>0} c_x e^{i theta x})
    with c_x the Fourier coefficients of log(1 - s phi(theta)) on a periodic grid.
    """
    w = np.zeros(size)
    np.add.at(w, units % size, probs)
    coeffs = sp_fft.ifft(np.log(1.0 - s * sp_fft.fft(w)))
    plus = np.zeros(size, dtype=complex)
    plus[1:size // 2] = coeffs[1:size // 2]
    return sp_fft.ifft(np.exp(-sp_fft.fft(plus))).real[: size // 2]


def renewal_wiener_hopf(model: StepModel, u_max: float, size: int = 2**22, eps: float | None = None) -> RenewalFunction:
    """H on [0, u_max] from the Wiener-Hopf factorization, without ladder-time truncation.

    The walk is discounted by s = 1 - eps so that the periodic grid of `size`
    units does not alias; eps defaults to (size / 64)^(-alpha).  H_s increases
    to H as eps -> 0 with a gap close to A eps^rho, so the point value
    extrapolates from eps and 10 eps, `low` is H_s itself and `high` doubles
    the extrapolation step.  Heavy-tailed lattice models use their untruncated
    step law.
    """
    p, q, delta = _units(model)
    top = int(math.floor(u_max / delta + 1e-9))
    if top + 1 > size // 8:
        raise ValueError(f"grid of {size} units is too small for u_max = {u_max}")
    eps = eps if eps is not None else (size / 64.0) ** (-model.tail.alpha)
    if isinstance(model.law, ZetaLaw):
        offsets, probs = model.law.weights((size // 2 - 1 - p) // q)
    else:
        offsets, probs = model.offsets, model.probs
    units = p + q * offsets
    if np.abs(units).max() >= size // 2:
        raise ValueError("step support does not fit the periodic grid")
    fine = _wh_renewal_units(units, probs, size, 1.0 - eps)[: top + 1]
    coarse = _wh_renewal_units(units, probs, size, 1.0 - 10.0 * eps)[: top + 1]
    fine, coarse = np.maximum(fine, 0.0), np.maximum(coarse, 0.0)
    # each mass U_s(j) increases with s, so fine >= coarse termwise up to rounding
    step = np.maximum(fine - coarse, 0.0) / (10.0 ** model.limit_params().rho - 1.0)
    return RenewalFunction(delta, fine + step, fine, fine + 2.0 * step)


# ---------------------------------------------------------------- descent moment and Omega


@dataclass(frozen=True)
class DescentEstimate:
    value: float
    error: float
    status: str  # finite | infinite | inconclusive


def _descent_exponent(model: StepModel) -> float | None:
    """Exponent of H(x) P(X <= -x), or None when the left tail is bounded."""
    if model.is_lattice and not isinstance(model.law, ZetaLaw):
        return None
    if model.tail.alpha == 2.0:
        return None
    params = model.limit_params()
    return params.alpha * params.rho - params.alpha


def _prob_le_units(model: StepModel, m: NDArray[np.int64]) -> NDArray[np.float64]:
    """P(X <= -m delta) for integer m."""
    p, q, _ = _units(model)
    cdf = np.concatenate([[0.0], model.left_cdf_offsets()])
    # X = delta (p + q k) <= -m delta  iff  k <= floor((-m - p) / q)
    k = np.floor_divide(-m - p, q)
    idx = np.clip(k - model.k_min + 1, 0, len(cdf) - 1)
    return cdf[idx]


def expected_descent(model: StepModel, renewal: RenewalFunction) -> DescentEstimate:
    """E(-S_tau-) = int_0^inf H(x) P(X <= -x) dx as a lattice sum."""
    exponent = _descent_exponent(model)
    if exponent is not None and exponent > -1.0 + _BOUNDARY_SLACK:
        return DescentEstimate(math.inf, math.inf, "infinite")
    if exponent is not None and exponent >= -1.0 - _BOUNDARY_SLACK:
        return DescentEstimate(math.nan, math.inf, "inconclusive")
    delta = renewal.delta
    size = len(renewal.point)
    m = np.arange(1, size + 1)
    tails = _prob_le_units(model, m)
    # on (j delta, (j+1) delta] H equals cum[j] and P(X <= -x) equals tails[j]
    cum, lo_c, hi_c = (np.cumsum(a) for a in (renewal.point, renewal.low, renewal.high))
    value = delta * math.fsum(cum * tails)
    spread = delta * (math.fsum(hi_c * tails) - math.fsum(lo_c * tails))
    tail_err = 0.0
    if tails[-1] > 0:
        if exponent is None:
            tail_err = math.inf
        else:
            x_top = delta * size
            tail_err = x_top * cum[-1] * tails[-1] / (-exponent - 1.0)
    return DescentEstimate(value, spread + tail_err, "finite")


def omega_big(model: StepModel, s: float, renewal: RenewalFunction, j_max: int | None = None) -> float:
    """Omega(s) = sum_{j>=0} H(s + j h) P(X <= -s - j h), s in [0, h)."""
    p, q, delta = _units(model)
    h = model.require_lattice().span_h
    if not 0.0 <= s < h + 1e-12:
        raise ValueError("s must lie in [0, h)")
    s_units = int(round(s / delta))
    if not math.isclose(s_units * delta, s, abs_tol=1e-9):
        raise ValueError("s must be a multiple of the lattice grid h / den(a/h)")
    exponent = _descent_exponent(model)
    if exponent is not None and exponent > -1.0 - _BOUNDARY_SLACK:
        raise ValueError("Omega needs a finite descent moment")
    size = len(renewal.point)
    j_max = j_max if j_max is not None else (size - 1 - s_units) // q
    m = s_units + q * np.arange(j_max + 1)
    m = m[m < size]
    cum = np.concatenate([[0.0], np.cumsum(renewal.point)])
    return math.fsum(cum[m] * _prob_le_units(model, m))


# ---------------------------------------------------------------- LadderData and Q_n


@dataclass
class LadderData:
    model: StepModel
    chi: LadderHeights
    renewal: RenewalFunction
    descent: DescentEstimate
    c0_hat: float
    c0_spread: float
    table: dp.SurvivalTable

    def residue(self, n: int) -> float:
        """h * {a (n - 1) / h}, the argument of Omega at time n."""
        lat = self.model.require_lattice()
        frac = lat.ratio * (n - 1)
        return float(frac - math.floor(frac)) * lat.span_h

    def omega(self, s: float) -> float:
        return omega_big(self.model, s, self.renewal)

    def q_n_minus(self, n: int) -> float:
        return q_n_minus(self, n)

    def to_csv(self, path: str | Path, n_values) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["n", "Q_n_minus", "residue_class"])
            for n in n_values:
                out.writerow([int(n), repr(self.q_n_minus(int(n))), repr(self.residue(int(n)))])


def estimate_c0(model: StepModel, table: dp.SurvivalTable) -> tuple[float, float]:
    """Geometric mean of (c_n / h) P(tau- > n) over the top octave, with relative spread."""
    h = model.require_lattice().span_h
    ns = np.arange(max(1, table.N // 2), table.N + 1)
    vals = np.array([norm_seq(model, int(n)) / h * table.rows[n].survival for n in ns])
    gm = float(np.exp(np.mean(np.log(vals))))
    return gm, float((vals.max() - vals.min()) / gm)


def build_ladder(model: StepModel, N: int = 2048, n_max: int = 4096, u_max: float | None = None) -> LadderData:
    chi = ladder_height_pmf(model, n_max, u_max)
    renewal = renewal_function(chi)
    table = dp.survival_table(model, N)
    descent = expected_descent(model, renewal)
    c0, spread = estimate_c0(model, table)
    return LadderData(model, chi, renewal, descent, c0, spread, table)


def q_n_minus(data: LadderData, n: int) -> float:
    """Q_n = g(0) Omega(h {a (n-1) / h}) / C0.

    This normalization makes n P(tau- = n) / P(tau- > n) ~ Q_n when
    c_n P(tau- > n) -> C0, with c_n taken for the walk rescaled to span one.
    """
    if data.descent.status != "finite":
        raise ValueError("Q_n needs a finite descent moment")
    g0 = stable_density_at_zero(data.model.limit_params())
    return g0 * data.omega(data.residue(n)) / data.c0_hat
