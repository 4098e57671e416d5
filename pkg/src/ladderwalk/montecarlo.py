"""Seeded rejection sampling of walks killed at the first S_k <= 0.

A root seed expands into one `SeedSequence` child per worker; each worker owns
its stream and a fixed share of the work, and results are concatenated in
worker order, so output depends only on (seed, workers).  Lattice walks are
simulated on integer offsets, which keeps the killing test exact.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from numpy.typing import NDArray

from .stable import stable_density_at_zero
from .steps import StepModel, norm_seq, sample

MIN_ACCEPTANCE = 1e-6
# paths tried before the acceptance rate is trusted enough to abort
_PILOT_PATHS = 2_000_000
BATCH = 65_536


class AcceptanceError(RuntimeError):
    pass


@dataclass
class McEstimate:
    value: float
    std_err: float
    n_samples: int
    seed: int
    wall_clock: float
    op: str = ""
    model: str = ""
    n: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("estimate is not finite")
        if not self.std_err >= 0.0:
            raise ValueError("std_err must be >= 0")

    def to_record(self) -> dict:
        return asdict(self)

    def deterministic_payload(self) -> dict:
        """The record without timing, for reproducibility comparisons."""
        rec = self.to_record()
        rec.pop("wall_clock")
        return rec


@dataclass
class ConditionedSample:
    """Terminal values S_n of the surviving paths and the survival estimate."""

    model: str
    n: int
    values: NDArray[np.float64]
    accepted: int
    tried: int
    seed: int
    workers: int
    wall_clock: float

    @property
    def survival(self) -> float:
        return self.accepted / self.tried

    @property
    def survival_se(self) -> float:
        p = self.survival
        return math.sqrt(p * (1.0 - p) / self.tried)


# ---------------------------------------------------------------- path engine


class _Stepper:
    """Advances a vector of positions; integer offsets for lattice models.

    A lattice position after k steps is S_k = h (r k + x) with integer x, so
    survival is the exact integer test num * k + den * x > 0 for r = num / den.
    """

    def __init__(self, model: StepModel):
        self.model = model
        self.lattice = model.require_lattice() if model.is_lattice else None
        if self.lattice is not None:
            ratio = self.lattice.ratio
            if not isinstance(ratio, Fraction):
                raise ValueError("Monte Carlo on lattice models needs a rational shift")
            self.num, self.den = ratio.numerator, ratio.denominator

    def start(self, size: int) -> NDArray:
        return np.zeros(size, dtype=np.int64 if self.lattice is not None else float)

    def step(self, pos: NDArray, rng: np.random.Generator) -> NDArray:
        if self.lattice is None:
            return pos + sample(self.model, rng, len(pos))
        return pos + self.model.law.sample_offsets(rng, len(pos))

    def alive(self, pos: NDArray, k: int) -> NDArray[np.bool_]:
        if self.lattice is None:
            return pos > 0.0
        return self.num * k + self.den * pos > 0

    def values(self, pos: NDArray, k: int) -> NDArray[np.float64]:
        if self.lattice is None:
            return np.asarray(pos, dtype=float)
        return self.lattice.span_h * (float(self.lattice.ratio) * k + pos)


def _run_killed(stepper: _Stepper, n: int, size: int, rng: np.random.Generator, keep_pre: bool = False):
    """Simulate `size` killed paths; returns survivors' positions and (optionally) pre-death positions at n."""
    pos = stepper.start(size)
    pre_death = None
    for k in range(1, n + 1):
        prev = pos
        pos = stepper.step(pos, rng)
        ok = stepper.alive(pos, k)
        if keep_pre and k == n:
            pre_death = stepper.values(prev[~ok], k - 1)
        pos = pos[ok]
        if pos.size == 0:
            break
    return pos, pre_death


def _worker_conditioned(model: StepModel, n: int, target: int, seed_seq: np.random.SeedSequence, max_paths: int):
    rng = np.random.default_rng(seed_seq)
    stepper = _Stepper(model)
    chunks, accepted, tried = [], 0, 0
    while accepted < target:
        if tried >= max_paths:
            break
        pos, _ = _run_killed(stepper, n, BATCH, rng)
        tried += BATCH
        accepted += pos.size
        chunks.append(stepper.values(pos, n))
        if tried >= _PILOT_PATHS and accepted < MIN_ACCEPTANCE * tried:
            raise AcceptanceError(
                f"acceptance rate {accepted / tried:.2e} is below {MIN_ACCEPTANCE:.0e} at n={n}; lower n"
            )
    values = np.concatenate(chunks)[:target] if chunks else np.empty(0)
    # survival is estimated over every path tried, including those beyond the target
    return values, accepted, tried


def _split(total: int, workers: int) -> list[int]:
    base, extra = divmod(total, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _map_workers(func, args_list, workers: int):
    if workers == 1:
        return [func(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, *args) for args in args_list]
        return [f.result() for f in futures]


def simulate_conditioned(
    model: StepModel, n: int, target_accepted: int, seed: int, workers: int = 1, max_paths: int | None = None
) -> ConditionedSample:
    """Accepted terminal values S_n among paths with S_1, ..., S_n > 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    seqs = np.random.SeedSequence(seed).spawn(workers)
    cap = max_paths or 10**12
    shares = _split(target_accepted, workers)
    results = _map_workers(
        _worker_conditioned, [(model, n, s, q, max(1, cap // workers)) for s, q in zip(shares, seqs)], workers
    )
    values = np.concatenate([r[0] for r in results])
    accepted = sum(r[1] for r in results)
    tried = sum(r[2] for r in results)
    if accepted == 0:
        raise AcceptanceError(f"no surviving paths at n={n} after {tried} tries; lower n")
    return ConditionedSample(model.name, n, values, accepted, tried, seed, workers, time.perf_counter() - t0)


# ---------------------------------------------------------------- histograms


@dataclass
class MeanderHistogram:
    edges: NDArray[np.float64]
    density: NDArray[np.float64]
    std_err: NDArray[np.float64]
    mass_below_zero: float
    overflow: float
    sample: ConditionedSample

    @property
    def masses(self) -> NDArray[np.float64]:
        return self.density * np.diff(self.edges)

    def tv_distance(self, reference_masses: NDArray, reference_overflow: float = 0.0) -> float:
        """Half the l1 distance between the binned laws, the overflow bin included."""
        return 0.5 * float(np.abs(self.masses - reference_masses).sum() + abs(self.overflow - reference_overflow))


def _hist_edges(model: StepModel, n: int, cn: float, n_bins: int, z_max: float) -> NDArray[np.float64]:
    lat = model.require_lattice() if model.is_lattice else None
    if lat is None:
        return np.linspace(0.0, z_max, n_bins + 1)
    # bins hold a whole number of reachable lattice points, edges halfway between them
    spacing = lat.span_h / cn
    per_bin = max(1, round(z_max / n_bins / spacing))
    lowest = lat.span_h * (float(lat.ratio) * n - math.floor(float(lat.ratio) * n))
    if lowest <= 0.0:
        lowest += lat.span_h
    first = lowest / cn - spacing / 2.0
    count = max(1, math.floor((z_max - first) / (per_bin * spacing)))
    edges = first + per_bin * spacing * np.arange(count + 1)
    edges[0] = 0.0
    return edges


def meander_hist(
    model: StepModel, n: int, n_bins: int = 60, target_accepted: int = 100_000, seed: int = 0,
    workers: int = 1, z_max: float = 6.0,
) -> MeanderHistogram:
    """Binned density of S_n / c_n given survival, with binomial error bars."""
    sample_ = simulate_conditioned(model, n, target_accepted, seed, workers)
    cn = norm_seq(model, n)
    z = sample_.values / cn
    edges = _hist_edges(model, n, cn, n_bins, z_max)
    counts, _ = np.histogram(z, bins=edges)
    total = len(z)
    frac = counts / total
    widths = np.diff(edges)
    return MeanderHistogram(
        edges=edges,
        density=frac / widths,
        std_err=np.sqrt(frac * (1.0 - frac) / total) / widths,
        mass_below_zero=float(np.mean(z <= 0.0)),
        overflow=float(np.mean(z >= edges[-1])),
        sample=sample_,
    )


# ---------------------------------------------------------------- estimators


def _block_jackknife(x: NDArray, blocks: int = 50) -> tuple[float, float]:
    """Mean and delete-one-block jackknife standard error."""
    m = len(x)
    blocks = min(blocks, m)
    sums = np.array([b.sum() for b in np.array_split(x, blocks)])
    sizes = np.array([len(b) for b in np.array_split(x, blocks)])
    loo = (sums.sum() - sums) / (m - sizes)
    mean = float(x.mean())
    se = math.sqrt((blocks - 1) / blocks * float(np.sum((loo - loo.mean()) ** 2)))
    return mean, se


def _identity_regime(model: StepModel) -> None:
    if not (model.tail.alpha < 2.0 and model.tail.beta < 1.0):
        raise ValueError("the negative-moment identity needs alpha < 2 and beta < 1")


def identity_target(model: StepModel) -> float:
    """alpha (1 - rho) / (q (2 - alpha)) with q the left tail weight."""
    _identity_regime(model)
    a, rho = model.tail.alpha, model.limit_params().rho
    return a * (1.0 - rho) / (model.tail.left_mass_q * (2.0 - a))


def estimate_negative_moment(
    model: StepModel, n: int, alpha_exp: float | None = None, target_accepted: int = 200_000,
    seed: int = 0, workers: int = 1,
) -> McEstimate:
    """E[(S_n / c_n)^{-alpha_exp} | survival], alpha_exp defaulting to the tail index."""
    _identity_regime(model)
    exponent = model.tail.alpha if alpha_exp is None else alpha_exp
    sample_ = simulate_conditioned(model, n, target_accepted, seed, workers)
    z = sample_.values / norm_seq(model, n)
    mean, se = _block_jackknife(z ** (-exponent))
    return McEstimate(mean, se, len(z), seed, sample_.wall_clock, "negative_moment", model.name, n, workers)


@dataclass
class PositivityEstimate:
    le: NDArray[np.float64]
    std_err: NDArray[np.float64]
    paths: int
    seed: int


def _worker_positivity(model: StepModel, N: int, paths: int, seed_seq):
    rng = np.random.default_rng(seed_seq)
    stepper = _Stepper(model)
    counts = np.zeros(N, dtype=np.int64)
    done = 0
    while done < paths:
        size = min(BATCH, paths - done)
        pos = stepper.start(size)
        for k in range(1, N + 1):
            pos = stepper.step(pos, rng)
            counts[k - 1] += int(np.count_nonzero(~stepper.alive(pos, k)))
        done += size
    return counts


def positivity_sequence(model: StepModel, N: int, paths: int, seed: int = 0, workers: int = 1) -> PositivityEstimate:
    """Estimates of q_n = P(S_n <= 0), n = 1..N, from unconditioned paths."""
    seqs = np.random.SeedSequence(seed).spawn(workers)
    results = _map_workers(_worker_positivity, [(model, N, s, q) for s, q in zip(_split(paths, workers), seqs)], workers)
    q = sum(results) / paths
    return PositivityEstimate(q, np.sqrt(q * (1.0 - q) / paths), paths, seed)


@dataclass
class JumpLaw:
    edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    hits: int
    tried: int
    pre_values: NDArray[np.float64]
    cn: float
    flagged: bool

    def fraction_in(self, lo: float, hi: float) -> float:
        z = self.pre_values / self.cn
        return float(np.mean((z >= lo) & (z <= hi))) if len(z) else math.nan


def _worker_jump(model: StepModel, n: int, target: int, seed_seq, max_paths: int):
    rng = np.random.default_rng(seed_seq)
    stepper = _Stepper(model)
    hits, tried = [], 0
    got = 0
    while got < target and tried < max_paths:
        _, pre = _run_killed(stepper, n, BATCH, rng, keep_pre=True)
        tried += BATCH
        if pre is not None:
            hits.append(pre)
            got += len(pre)
    pre = np.concatenate(hits)[:target] if hits else np.empty(0)
    return pre, tried


def conditional_jump_law(
    model: StepModel, n: int, target: int = 20_000, seed: int = 0, workers: int = 1,
    n_bins: int = 50, z_max: float = 6.0, max_paths: int = 50_000_000, min_hits: int = 1000,
) -> JumpLaw:
    """Histogram of S_{n-1} / c_n over paths whose first weak descent happens at n."""
    _identity_regime(model)
    if n < 2:
        raise ValueError("n must be >= 2")
    seqs = np.random.SeedSequence(seed).spawn(workers)
    results = _map_workers(
        _worker_jump, [(model, n, s, q, max(1, max_paths // workers)) for s, q in zip(_split(target, workers), seqs)],
        workers,
    )
    pre = np.concatenate([r[0] for r in results])
    cn = norm_seq(model, n)
    edges = np.linspace(0.0, z_max, n_bins + 1)
    counts, _ = np.histogram(pre / cn, bins=edges)
    return JumpLaw(edges, counts, len(pre), sum(r[1] for r in results), pre, cn, len(pre) < min_hits)


def jump_law_normalization(density) -> float:
    """q (2 - alpha) / (alpha (1 - rho)) * int y^{-alpha} p(y) dy for a meander density."""
    params = density.params
    a, rho = params.alpha, params.rho
    q = (1.0 - params.beta) / 2.0
    return q * (2.0 - a) / (a * (1.0 - rho)) * negative_moment_of_density(density, a)


def negative_moment_of_density(density, exponent: float) -> float:
    """int z^{-exponent} p(z) dz, with p ~ C z^{alpha rho} used on the first grid cell."""
    z, v = density.z_grid, density.p_values
    power = density.params.alpha * density.params.rho
    if power - exponent <= -1.0:
        return math.inf
    head = v[1] / z[1] ** power * z[1] ** (power - exponent + 1.0) / (power - exponent + 1.0)
    return float(head + np.trapezoid(v[1:] * z[1:] ** (-exponent), z[1:]))


# ---------------------------------------------------------------- continuous ladder heights


@dataclass
class McRenewal:
    """Renewal function of strict ascending ladder heights estimated from sampled heights."""

    grid: NDArray[np.float64]
    H: NDArray[np.float64]
    defect: float
    n_heights: int

    def __call__(self, u):
        return np.interp(u, self.grid, self.H)

    def integral(self, x: float, width: float = 1.0) -> float:
        pts = np.linspace(x, x + width, 201)
        return float(np.trapezoid(self(pts), pts))


def ladder_heights_mc(model: StepModel, count: int, seed: int = 0, max_steps: int = 65_536) -> tuple[NDArray, int]:
    """First positive values of `count` walks; walks still <= 0 after max_steps are dropped and counted."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    stepper = _Stepper(model)
    out, lost = [], 0
    done = 0
    while done < count:
        size = min(BATCH, count - done)
        pos = stepper.start(size)
        for k in range(1, max_steps + 1):
            pos = stepper.step(pos, rng)
            up = stepper.alive(pos, k)
            if up.any():
                out.append(stepper.values(pos[up], k))
                pos = pos[~up]
            if pos.size == 0:
                break
        lost += pos.size
        done += size
    return np.concatenate(out), lost


def renewal_mc(model: StepModel, u_max: float, count: int = 100_000, seed: int = 0, cells: int = 2000) -> McRenewal:
    """H(u) = 1 + sum_k P(chi_1 + ... + chi_k < u) from the empirical ladder-height law."""
    heights, lost = ladder_heights_mc(model, count, seed)
    grid = np.linspace(0.0, u_max, cells + 1)
    du = grid[1]
    # height law on cells (j du, (j+1) du]; the renewal recursion then runs on the cell index
    counts = np.bincount(np.minimum(np.ceil(heights / du).astype(np.int64), cells + 1), minlength=cells + 2)
    f = counts[1 : cells + 1] / (len(heights) + lost)
    u = np.zeros(cells + 1)
    u[0] = 1.0
    for j in range(1, cells + 1):
        u[j] = f[:j] @ u[j - 1 :: -1]
    # H(grid[j]) counts renewals strictly below grid[j]; cell-rounding puts each height at its right edge
    # H[0] holds the right limit H(0+) = 1
    H = np.concatenate([[1.0], np.cumsum(u)[:-1]])
    return McRenewal(grid, H, lost / (len(heights) + lost), len(heights))


def small_deviation_prediction(model: StepModel, n: int, survival: float, renewal_integral: float) -> float:
    """g(0) int_x^{x+Delta} H / (n P(tau > n) c_n): predicted conditional bin probability."""
    g0 = stable_density_at_zero(model.limit_params())
    return g0 * renewal_integral / (n * survival * norm_seq(model, n))
