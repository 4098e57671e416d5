"""Exact lattice dynamic programming for walks killed on leaving (0, inf).

Positions are stored as integer offsets x with S_n = h * (r n + x), where
r = a / h is the lattice ratio of the step law.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy import fft as sp_fft
from scipy.signal import fftconvolve

from .steps import StepModel

_FFT_MIN = 64
_TRIM = 1e-15


def _convolve(a: NDArray, b: NDArray) -> tuple[NDArray, float]:
    """Linear convolution; returns the result and the mass of clipped FFT noise."""
    if min(len(a), len(b)) < _FFT_MIN:
        return np.convolve(a, b), 0.0
    out = fftconvolve(a, b)
    neg = out < 0.0
    clipped = float(-out[neg].sum())
    out[neg] = 0.0
    return out, clipped


def first_alive(ratio, n: int, keep_zero: bool = False) -> int:
    """Smallest offset x alive at time n: r n + x > 0, or >= 0 with keep_zero."""
    edge = -ratio * n
    if keep_zero:
        return math.ceil(edge)
    return math.floor(edge) + 1


@dataclass
class LatticePmf:
    """Point masses on consecutive offsets starting at `x_min` at time n."""

    n: int
    x_min: int
    probs: NDArray[np.float64]
    span_h: float
    ratio: Fraction | float

    @property
    def offsets(self) -> NDArray[np.int64]:
        return self.x_min + np.arange(len(self.probs), dtype=np.int64)

    @property
    def values(self) -> NDArray[np.float64]:
        return self.span_h * (float(self.ratio) * self.n + self.offsets)

    def as_dict(self, by: str = "value") -> dict:
        keys = self.values if by == "value" else self.offsets
        return {(float(k) if by == "value" else int(k)): float(p) for k, p in zip(keys, self.probs) if p > 0}

    def at(self, x: int) -> float:
        i = x - self.x_min
        return float(self.probs[i]) if 0 <= i < len(self.probs) else 0.0


def _step_arrays(model: StepModel) -> tuple[int, NDArray, Fraction | float, float]:
    lat = model.require_lattice()
    return model.k_min, model.probs, lat.ratio, lat.span_h


def unconditioned_pmfs(model: StepModel, N: int):
    """Yield the exact pmf of S_n for n = 1..N.

    Wide steps use powers of one FFT of the step pmf instead of repeated
    convolution; tiny negative round-off is clipped to zero.
    """
    k_min, step, ratio, h = _step_arrays(model)
    if len(step) >= _FFT_MIN:
        width = len(step) - 1
        size = sp_fft.next_fast_len(N * width + 1, real=True)
        base = sp_fft.rfft(step, size)
        power = np.ones_like(base)
        for n in range(1, N + 1):
            power = power * base
            probs = sp_fft.irfft(power, size)[: n * width + 1]
            yield LatticePmf(n, n * k_min, np.maximum(probs, 0.0), h, ratio)
        return
    state, x_min = np.array([1.0]), 0
    for n in range(1, N + 1):
        state = np.convolve(state, step)
        x_min += k_min
        nz = np.nonzero(state > 0)[0]
        if nz.size and (nz[0] > 0 or nz[-1] < len(state) - 1):
            state = state[nz[0]:nz[-1] + 1]
            x_min += int(nz[0])
        yield LatticePmf(n, x_min, state.copy(), h, ratio)


def unconditioned_pmf(model: StepModel, n: int) -> LatticePmf:
    if not model.is_lattice:
        raise ValueError("exact pmf requires a lattice model")
    if n == 0:
        lat = model.require_lattice()
        return LatticePmf(0, 0, np.array([1.0]), lat.span_h, lat.ratio)
    for pmf in unconditioned_pmfs(model, n):
        pass
    return pmf


def positivity_probabilities(model: StepModel, N: int) -> dict[str, NDArray[np.float64]]:
    """Exact P(S_n <= 0), P(S_n < 0) and P(S_n > 0) for n = 1..N."""
    le, lt, gt = np.empty(N), np.empty(N), np.empty(N)
    for pmf in unconditioned_pmfs(model, N):
        n = pmf.n
        pos = pmf.offsets >= first_alive(pmf.ratio, n)
        nonneg = pmf.offsets >= first_alive(pmf.ratio, n, keep_zero=True)
        # numpy's pairwise summation keeps round-off near 1e-16 here
        gt[n - 1] = pmf.probs[pos].sum()
        le[n - 1] = pmf.probs[~pos].sum()
        lt[n - 1] = pmf.probs[~nonneg].sum()
    return {"le": le, "lt": lt, "gt": gt}


@dataclass
class SurvivalRow:
    n: int
    x_min: int
    probs: NDArray[np.float64]
    survival: float
    mass_defect: float

    @property
    def offsets(self) -> NDArray[np.int64]:
        return self.x_min + np.arange(len(self.probs), dtype=np.int64)


@dataclass
class SurvivalTable:
    """Rows b_n(x) = P(S_n = h(rn + x); walk alive up to n) for n = 0..N.

    With keep_zero=False the walk is killed at the first S_k <= 0 (so the
    lifetime is the weak descending epoch); with keep_zero=True it is killed at
    the first S_k < 0.
    """

    model: StepModel
    N: int
    rows: list[SurvivalRow] = field(repr=False)
    killed: NDArray[np.float64] = field(repr=False)
    keep_zero: bool = False
    complete: bool = True

    @property
    def ratio(self):
        return self.model.require_lattice().ratio

    @property
    def span_h(self) -> float:
        return self.model.require_lattice().span_h

    @property
    def survival(self) -> NDArray[np.float64]:
        return np.array([row.survival for row in self.rows])

    def row(self, n: int) -> SurvivalRow:
        return self.rows[n]

    def values(self, n: int) -> NDArray[np.float64]:
        row = self.rows[n]
        return self.span_h * (float(self.ratio) * n + row.offsets)

    def b(self, n: int, x: int) -> float:
        row = self.rows[n]
        i = x - row.x_min
        return float(row.probs[i]) if 0 <= i < len(row.probs) else 0.0

    def B(self, n: int, level: float) -> float:
        """P(0 < S_n < level, alive at n)."""
        if n == 0:
            return 0.0
        vals = self.values(n)
        return math.fsum(self.rows[n].probs[(vals > 0) & (vals < level - 1e-12 * max(1.0, level))])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["n", "offset", "prob", "survival", "mass_defect"])
            for row in self.rows:
                for x, p in zip(row.offsets, row.probs):
                    out.writerow([row.n, int(x), repr(float(p)), repr(row.survival), repr(row.mass_defect)])


def survival_table(
    model: StepModel, N: int, keep_zero: bool = False, max_cells: int = 200_000_000
) -> SurvivalTable:
    """Forward DP of the killed walk up to time N.

    The top of the range is trimmed while the discarded mass stays below 1e-15
    per step; trimmed mass and clipped FFT noise accumulate in mass_defect.  If
    the stored cells would exceed `max_cells` the table stops early and
    `complete` is False.
    """
    if not model.is_lattice:
        raise ValueError("survival tables require a lattice model")
    k_min, step, ratio, _ = _step_arrays(model)
    rows = [SurvivalRow(0, 0, np.array([1.0]), 1.0, 0.0)]
    killed = np.zeros(N + 1)
    state, x_min, defect, cells = np.array([1.0]), 0, 0.0, 1
    complete = True
    for n in range(1, N + 1):
        new, clipped = _convolve(state, step)
        new_min = x_min + k_min
        cut = first_alive(ratio, n, keep_zero) - new_min
        if cut > 0:
            killed[n] = math.fsum(new[:cut])
            new = new[cut:]
            new_min += cut
        top = np.cumsum(new[::-1])
        n_drop = int(np.searchsorted(top, _TRIM, side="right"))
        if n_drop:
            defect += float(top[n_drop - 1])
            new = new[: len(new) - n_drop]
        defect += clipped
        state, x_min = new, new_min
        cells += len(state)
        if cells > max_cells:
            complete = False
            N = n - 1
            break
        rows.append(SurvivalRow(n, x_min, state, math.fsum(state), defect))
    return SurvivalTable(model, N, rows, killed[: N + 1], keep_zero, complete)


def tau_minus_pmf_exact(table: SurvivalTable) -> NDArray[np.float64]:
    """P(tau = n), n = 1..N, from P(tau = n) = sum_x b_{n-1}(x) P(X <= -S_{n-1})."""
    model = table.model
    cdf = model.left_cdf_offsets()
    k_min = model.k_min
    ratio = table.ratio
    out = np.empty(table.N)
    for n in range(1, table.N + 1):
        row = table.rows[n - 1]
        # S_{n-1} + X stays dead iff the step offset k < first_alive(n) - x
        k_max_dead = first_alive(ratio, n, table.keep_zero) - 1 - row.offsets
        idx = np.clip(k_max_dead - k_min, -1, len(cdf) - 1)
        dead = np.where(idx >= 0, cdf[np.maximum(idx, 0)], 0.0)
        out[n - 1] = math.fsum(row.probs * dead)
    return out


def conditional_local(table: SurvivalTable, n: int, x: int) -> float:
    """P(S_n = h(rn + x) | alive at n)."""
    surv = table.rows[n].survival
    if surv <= 0.0:
        raise ZeroDivisionError(f"survival probability at n={n} is zero")
    return table.b(n, x) / surv


def _positive_parts(model: StepModel, N: int) -> list[LatticePmf]:
    """pmf of S_m restricted to S_m > 0, for m = 0..N (m = 0 is empty)."""
    lat = model.require_lattice()
    parts = [LatticePmf(0, 0, np.zeros(0), lat.span_h, lat.ratio)]
    for pmf in unconditioned_pmfs(model, N):
        cut = max(0, first_alive(lat.ratio, pmf.n) - pmf.x_min)
        parts.append(LatticePmf(pmf.n, pmf.x_min + cut, pmf.probs[cut:], lat.span_h, lat.ratio))
    return parts


def verify_recurrence(model: StepModel, N: int, table: SurvivalTable | None = None) -> float:
    """Largest |residual| of the point recurrence for n b_n(x) over n <= N.

    n b_n(x) = P(S_n = .; S_n > 0) + sum_{k<n} sum_y b_k(x - y) P(S_{n-k} = y; S_{n-k} > 0)
    """
    table = table or survival_table(model, N)
    parts = _positive_parts(model, N)
    worst = 0.0
    for n in range(1, N + 1):
        row = table.rows[n]
        lo, width = row.x_min, len(row.probs)
        rhs = np.zeros(width)
        first = parts[n]
        _accumulate(rhs, lo, first.probs, first.x_min)
        for k in range(1, n):
            bk, pm = table.rows[k], parts[n - k]
            if len(bk.probs) == 0 or len(pm.probs) == 0:
                continue
            conv = np.convolve(bk.probs, pm.probs)
            _accumulate(rhs, lo, conv, bk.x_min + pm.x_min)
        worst = max(worst, float(np.max(np.abs(n * row.probs - rhs))) if width else 0.0)
    return worst


def _accumulate(target: NDArray, lo: int, values: NDArray, start: int) -> None:
    """target[x - lo] += values[x - start] on the overlap."""
    a = max(lo, start)
    b = min(lo + len(target), start + len(values))
    if a < b:
        target[a - lo:b - lo] += values[a - start:b - start]


def _value_units(ratio) -> tuple[int, int]:
    """(numerator, denominator) of a rational ratio, used for exact level arithmetic."""
    if not isinstance(ratio, Fraction):
        raise ValueError("level recurrence needs a rational lattice ratio")
    return ratio.numerator, ratio.denominator


def verify_level_recurrence(model: StepModel, N: int, table: SurvivalTable | None = None) -> float:
    """Largest |residual| of the interval recurrence for n B_n(x), n <= N.

    n B_n(x) = P(0 < S_n < x) + sum_{k<n} sum_{0<y<x} B_{n-k}(x - y) P(S_k = y)

    Levels are integers in units of h / den(r); test levels are every integer
    and half-integer unit in the reachable range, so both the open-interval
    endpoints and the gaps between atoms are exercised.
    """
    table = table or survival_table(model, N)
    num, den = _value_units(table.ratio)
    parts = _positive_parts(model, N)

    def units(n: int, offsets: NDArray) -> NDArray[np.int64]:
        return num * n + den * offsets

    def level_cdf(n: int):
        """Sorted unit positions and cumulative masses of row n."""
        row = table.rows[n]
        return units(n, row.offsets), np.concatenate([[0.0], np.cumsum(row.probs)])

    cdfs = [level_cdf(n) for n in range(N + 1)]

    def big_b(n: int, levels: NDArray) -> NDArray:
        pos, cum = cdfs[n]
        return cum[np.searchsorted(pos, levels, side="left")]

    worst = 0.0
    for n in range(1, N + 1):
        pos_n = cdfs[n][0]
        top = int(pos_n[-1]) + 2 if len(pos_n) else 2
        levels = np.arange(1, 2 * top) / 2.0
        lhs = n * big_b(n, levels)
        part = parts[n]
        ppos = units(n, part.offsets)
        rhs = np.concatenate([[0.0], np.cumsum(part.probs)])[np.searchsorted(ppos, levels, side="left")]
        for k in range(1, n):
            pk = parts[k]
            ys = units(k, pk.offsets)
            # sum over atoms y of S_k with 0 < y < level of B_{n-k}(level - y) P(S_k = y)
            diff = levels[:, None] - ys[None, :]
            contrib = np.where(diff > 0, big_b(n - k, diff.ravel()).reshape(diff.shape), 0.0)
            rhs = rhs + contrib @ pk.probs
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst
