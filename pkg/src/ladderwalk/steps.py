"""Step distributions: registry, lattice structure, truncated moments and norming."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, special

from .stable import StableParams, is_admissible

Number = Fraction | float

DEFAULT_PARETO_CUTOFF = 512


@dataclass(frozen=True)
class TailInfo:
    alpha: float
    beta: float = 0.0
    left_mass_q: float = 0.5


@dataclass(frozen=True)
class Lattice:
    """Support contained in {shift_a + k * span_h}, span maximal.

    `ratio` is shift_a / span_h, kept as a Fraction whenever the support is
    rational so that boundary comparisons stay exact.
    """

    span_h: float
    shift_a: float
    ratio: Number


# ---------------------------------------------------------------- step laws


@dataclass(frozen=True)
class FiniteLaw:
    """Finitely supported lattice law; `offsets` index the lattice points."""

    offsets: NDArray[np.int64]
    probs: NDArray[np.float64]

    def sample_offsets(self, rng: np.random.Generator, size: int) -> NDArray[np.int64]:
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return self.offsets[np.minimum(idx, len(self.offsets) - 1)]


@dataclass(frozen=True)
class ZetaLaw:
    """P(X = k) = p k^{-alpha-1} / zeta(alpha+1), P(X = -k) likewise with q.

    For alpha > 1 the atoms at +1 and -1 are shifted by `atom_shift` so that
    the mean is zero while the total mass stays one.
    """

    alpha: float
    p: float
    atom_shift: float = 0.0

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def zeta(self) -> float:
        return float(special.zeta(self.alpha + 1.0))

    def weights(self, k_max: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Untruncated point masses on -k_max..k_max (not renormalized)."""
        k = np.arange(1, k_max + 1, dtype=float)
        base = k ** (-self.alpha - 1.0) / self.zeta
        right, left = self.p * base, self.q * base
        right[0] -= self.atom_shift
        left[0] += self.atom_shift
        probs = np.concatenate([left[::-1], [0.0], right])
        return np.arange(-k_max, k_max + 1, dtype=np.int64), probs

    def abs_tail(self, u: float) -> float:
        """P(|X| > u) for the untruncated law."""
        m = math.floor(u)
        if m < 1:
            return 1.0
        return float(special.zeta(self.alpha + 1.0, m + 1)) / self.zeta

    def sample_offsets(self, rng: np.random.Generator, size: int) -> NDArray[np.int64]:
        sign = np.where(rng.random(size) < self.p, 1, -1)
        if self.atom_shift == 0.0:
            return sign * rng.zipf(self.alpha + 1.0, size)
        # Mixture: atoms at +-1 carry the shifted masses, |k| >= 2 is a zipf tail.
        z = self.zeta
        m_plus, m_minus = self.p / z - self.atom_shift, self.q / z + self.atom_shift
        u = rng.random(size)
        out = np.empty(size, dtype=np.int64)
        plus_atom = u < m_plus
        minus_atom = (~plus_atom) & (u < m_plus + m_minus)
        tail = ~(plus_atom | minus_atom)
        out[plus_atom], out[minus_atom] = 1, -1
        n_tail = int(tail.sum())
        mags = np.empty(0, dtype=np.int64)
        while mags.size < n_tail:
            draw = rng.zipf(self.alpha + 1.0, 2 * (n_tail - mags.size) + 16)
            mags = np.concatenate([mags, draw[draw >= 2]])
        tail_sign = np.where(rng.random(n_tail) < self.p, 1, -1)
        out[tail] = tail_sign * mags[:n_tail]
        return out


@dataclass(frozen=True)
class GaussianLaw:
    def pdf(self, x):
        return np.exp(-np.square(x) / 2.0) / math.sqrt(2.0 * math.pi)

    def abs_tail(self, u: float) -> float:
        return float(special.erfc(u / math.sqrt(2.0)))

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        return rng.standard_normal(size)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    symmetric = True


@dataclass(frozen=True)
class CauchyLaw:
    def pdf(self, x):
        return 1.0 / (math.pi * (1.0 + np.square(x)))

    def abs_tail(self, u: float) -> float:
        return 1.0 - 2.0 * math.atan(u) / math.pi

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        return rng.standard_cauchy(size)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    symmetric = True


@dataclass(frozen=True)
class SymParetoLaw:
    """Random sign times a Pareto variable with P(|X| > x) = x^{-alpha}, x >= 1."""

    alpha: float

    def pdf(self, x):
        ax = np.abs(x)
        return np.where(ax >= 1.0, 0.5 * self.alpha * np.maximum(ax, 1.0) ** (-self.alpha - 1.0), 0.0)

    def abs_tail(self, u: float) -> float:
        return 1.0 if u < 1.0 else u ** (-self.alpha)

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (1.0,)

    symmetric = True


# ---------------------------------------------------------------- models


@dataclass(frozen=True, eq=False)
class StepModel:
    """A step law X.

    For lattice models X = shift_a + span_h * k with integer offset k, and the
    exact pmf is stored densely as `probs[i] = P(k = k_min + i)`.  Heavy-tailed
    lattice models keep an untruncated `law` for sampling and moments, while
    `probs` is the renormalized law of X given |X| <= cutoff; the discarded mass
    is `truncated_mass`.
    """

    name: str
    kind: str
    tail: TailInfo
    law: object
    lattice: Lattice | None = None
    k_min: int = 0
    probs: NDArray[np.float64] | None = field(default=None, repr=False)
    truncated_mass: float = 0.0
    mean_zero: bool = True

    @property
    def is_lattice(self) -> bool:
        return self.kind == "lattice"

    def require_lattice(self) -> Lattice:
        if self.lattice is None or self.probs is None:
            raise ValueError(f"model {self.name!r} is not a lattice model")
        return self.lattice

    @property
    def offsets(self) -> NDArray[np.int64]:
        return self.k_min + np.arange(len(self.probs), dtype=np.int64)

    def support_values(self) -> NDArray[np.float64]:
        lat = self.require_lattice()
        return lat.shift_a + lat.span_h * self.offsets

    def pmf(self) -> dict[float, float]:
        return {float(v): float(p) for v, p in zip(self.support_values(), self.probs) if p > 0.0}

    def limit_params(self) -> StableParams:
        return StableParams.canonical(self.tail.alpha, self.tail.beta)

    def negated(self) -> StepModel:
        """The law of -X (lattice models only)."""
        lat = self.require_lattice()
        probs = self.probs[::-1].copy()
        k_min = -(self.k_min + len(self.probs) - 1)
        shift = -lat.ratio
        whole = math.floor(shift)
        neg_lat = Lattice(lat.span_h, float(shift - whole) * lat.span_h, shift - whole)
        return StepModel(
            name=f"-({self.name})",
            kind="lattice",
            tail=TailInfo(self.tail.alpha, -self.tail.beta, 1.0 - self.tail.left_mass_q),
            law=FiniteLaw(np.arange(k_min + whole, k_min + whole + len(probs)), probs),
            lattice=neg_lat,
            k_min=k_min + whole,
            probs=probs,
            truncated_mass=self.truncated_mass,
            mean_zero=self.mean_zero,
        )

    def left_cdf_offsets(self) -> NDArray[np.float64]:
        """cumulative[i] = P(k <= k_min + i)."""
        return np.cumsum(self.probs)

    def prob_le(self, y: float) -> float:
        """P(X <= y)."""
        if not self.is_lattice:
            raise ValueError("prob_le needs a lattice model")
        values = self.support_values()
        return float(self.probs[values <= y + 1e-12 * max(1.0, abs(y))].sum())


def _frac_gcd(a: Fraction, b: Fraction) -> Fraction:
    if a == 0:
        return abs(b)
    if b == 0:
        return abs(a)
    den = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
    return Fraction(math.gcd(int(a * den), int(b * den)), den)


def lattice_of_support(points: Sequence[Fraction]) -> tuple[Fraction, Fraction]:
    """Maximal span and shift of a rational support with at least two points."""
    pts = sorted(set(Fraction(p) for p in points))
    if len(pts) < 2:
        raise ValueError("a degenerate one-point support has no span")
    h = reduce(_frac_gcd, (p - pts[0] for p in pts[1:]))
    a = pts[0] - h * math.floor(pts[0] / h)
    return h, a


def lattice_model(
    name: str,
    support: Sequence[Fraction | int | str],
    weights: Sequence[Fraction | int | str],
    tail: TailInfo | None = None,
) -> StepModel:
    """Build a finitely supported lattice model from rational points and weights."""
    pts = [Fraction(p) for p in support]
    wts = [Fraction(w) for w in weights]
    if len(pts) != len(wts):
        raise ValueError("support and weights differ in length")
    if any(w < 0 for w in wts):
        raise ValueError("weights must be nonnegative")
    total = sum(wts)
    if total <= 0:
        raise ValueError("weights sum to zero")
    wts = [w / total for w in wts]
    kept = [(p, w) for p, w in zip(pts, wts) if w > 0]
    h, a = lattice_of_support([p for p, _ in kept])
    ks = [int((p - a) / h) for p, _ in kept]
    k_min = min(ks)
    probs = np.zeros(max(ks) - k_min + 1)
    for k, (_, w) in zip(ks, kept):
        probs[k - k_min] += float(w)
    mean = sum(p * w for p, w in kept)
    neg = float(sum(w for p, w in kept if p < 0))
    tail = tail or TailInfo(2.0, 0.0, 0.5)
    lat = Lattice(float(h), float(a), a / h)
    offsets = np.arange(k_min, k_min + len(probs), dtype=np.int64)
    return StepModel(
        name=name,
        kind="lattice",
        tail=TailInfo(tail.alpha, tail.beta, tail.left_mass_q if tail.alpha < 2 else neg),
        law=FiniteLaw(offsets, probs),
        lattice=lat,
        k_min=k_min,
        probs=probs,
        mean_zero=mean == 0,
    )


def simple_rw() -> StepModel:
    return lattice_model("simple_rw", [-1, 1], ["1/2", "1/2"])


def lazy_rw() -> StepModel:
    return lattice_model("lazy_rw", [-1, 0, 1], ["1/4", "1/2", "1/4"])


def half_simple_rw() -> StepModel:
    """Simple random walk divided by two: a (1, 1/2)-lattice walk."""
    return lattice_model("half_simple_rw", ["-1/2", "1/2"], ["1/2", "1/2"])


def shifted_lattice(shift: Fraction | str | float = Fraction(1, 3), zero_weight: Fraction | str = "1/3") -> StepModel:
    """Support {a-1, a, a+1} with mean-zero weights, giving a (1, a)-lattice.

    Irrational shifts may be passed as floats; the lattice ratio is then kept
    in floating point.
    """
    w0 = Fraction(zero_weight)
    if isinstance(shift, float) and Fraction(shift).limit_denominator(10**6) != Fraction(shift):
        a = shift
        w_minus, w_plus = (1 - float(w0) + a) / 2.0, (1 - float(w0) - a) / 2.0
        if min(w_minus, w_plus) < 0:
            raise ValueError("shift too large for the requested zero weight")
        probs = np.array([w_minus, float(w0), w_plus])
        return StepModel(
            name=f"shifted({a:.6g})",
            kind="lattice",
            tail=TailInfo(2.0, 0.0, w_minus),
            law=FiniteLaw(np.arange(-1, 2), probs),
            lattice=Lattice(1.0, a, a),
            k_min=-1,
            probs=probs,
        )
    a = Fraction(shift)
    if not 0 < a < 1:
        raise ValueError("shift must lie in (0, 1)")
    # mean (a-1) w- + a w0 + (a+1) w+ = 0 with w- + w0 + w+ = 1 gives w- - w+ = a
    w_minus, w_plus = (1 - w0 + a) / 2, (1 - w0 - a) / 2
    if w_plus < 0:
        raise ValueError("shift too large for the requested zero weight")
    return lattice_model(f"shifted({a})", [a - 1, a, a + 1], [w_minus, w0, w_plus])


def zeta_model(alpha: float, p: float = 0.5, cutoff: int = DEFAULT_PARETO_CUTOFF) -> StepModel:
    """Discrete Pareto law on the nonzero integers with tail weights (p, q).

    The exact pmf keeps |k| <= cutoff and is renormalized; for alpha > 1 the
    atoms at +-1 are adjusted so that both the full law and the truncated pmf
    have mean zero.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    beta = 2.0 * p - 1.0
    if not is_admissible(alpha, beta):
        raise ValueError(f"(alpha, beta) = ({alpha}, {beta}) is not admissible")
    shift = 0.0
    if alpha > 1.0 and p != 0.5:
        mean = (2.0 * p - 1.0) * float(special.zeta(alpha)) / float(special.zeta(alpha + 1.0))
        shift = mean / 2.0
    law = ZetaLaw(alpha, p, shift)
    offsets, probs = law.weights(cutoff)
    kept = probs.sum()
    probs = probs / kept
    if alpha > 1.0:
        mean = float(offsets @ probs)
        probs[cutoff + 1] -= mean / 2.0
        probs[cutoff - 1] += mean / 2.0
    if probs.min() < 0:
        raise ValueError("centering made a weight negative; choose p closer to 1/2")
    name = f"pareto({alpha:g})" if p == 0.5 else f"pareto({alpha:g},{p:g})"
    return StepModel(
        name=name,
        kind="lattice",
        tail=TailInfo(alpha, beta, 1.0 - p),
        law=law,
        lattice=Lattice(1.0, 0.0, Fraction(0)),
        k_min=-cutoff,
        probs=probs,
        truncated_mass=1.0 - float(kept),
        mean_zero=alpha > 1.0 or p == 0.5,
    )


def gaussian() -> StepModel:
    return StepModel("gaussian", "continuous", TailInfo(2.0, 0.0, 0.5), GaussianLaw())


def cauchy() -> StepModel:
    return StepModel("cauchy", "continuous", TailInfo(1.0, 0.0, 0.5), CauchyLaw(), mean_zero=False)


def pareto_continuous(alpha: float) -> StepModel:
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2)")
    return StepModel(
        f"pareto_cont({alpha:g})", "continuous", TailInfo(alpha, 0.0, 0.5), SymParetoLaw(alpha),
        mean_zero=alpha > 1.0,
    )


_REGISTRY = {
    "simple_rw": simple_rw,
    "lazy_rw": lazy_rw,
    "half_simple_rw": half_simple_rw,
    "shifted": shifted_lattice,
    "pareto": zeta_model,
    "gaussian": gaussian,
    "cauchy": cauchy,
    "pareto_cont": pareto_continuous,
}


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def _coerce(token: str):
    token = token.strip()
    if re.fullmatch(r"-?\d+", token):
        return int(token)
    if "/" in token:
        return Fraction(token)
    return float(token)


def get_model(spec: str) -> StepModel:
    """Resolve `name` or `name:arg1,arg2` from the registry, or a model file path."""
    path = Path(spec)
    if path.suffix and path.exists():
        return load_model_file(path)
    name, _, args = spec.partition(":")
    if name not in _REGISTRY:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(registry_names())}")
    values = [_coerce(a) for a in args.split(",")] if args else []
    if name == "shifted":
        values = [v if not isinstance(v, int) else Fraction(v) for v in values]
    elif name in ("pareto", "pareto_cont") and values:
        values = [float(values[0]), *values[1:]]
    return _REGISTRY[name](*values)


# ---------------------------------------------------------------- model files


class ModelFileError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_KNOWN_KEYS = {"name", "kind", "alpha", "beta", "support", "weights", "density", "lattice", "p", "cutoff"}


def parse_model_text(text: str) -> StepModel:
    """Parse `key = value` lines; '#' starts a comment."""
    entries: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelFileError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ModelFileError(lineno, f"unknown key {key!r}")
        if key in entries:
            raise ModelFileError(lineno, f"duplicate key {key!r}")
        entries[key] = (lineno, value)

    last = max((ln for ln, _ in entries.values()), default=0)

    def need(key: str) -> tuple[int, str]:
        if key not in entries:
            raise ModelFileError(last + 1, f"missing required key {key!r}")
        return entries[key]

    def number(key: str, default=None):
        if key not in entries:
            if default is None:
                need(key)
            return default
        ln, value = entries[key]
        try:
            return float(Fraction(value))
        except (ValueError, ZeroDivisionError):
            raise ModelFileError(ln, f"{key} must be a number, got {value!r}") from None

    def fractions(key: str) -> list[Fraction]:
        ln, value = need(key)
        try:
            return [Fraction(tok.strip()) for tok in value.split(",") if tok.strip()]
        except (ValueError, ZeroDivisionError):
            raise ModelFileError(ln, f"{key} must be a comma-separated list of numbers") from None

    name = need("name")[1]
    kind_line, kind = need("kind")
    alpha = number("alpha", 2.0)
    beta = number("beta", 0.0)
    if not is_admissible(alpha, beta):
        raise ModelFileError(entries.get("alpha", (kind_line,))[0], f"(alpha, beta) = ({alpha}, {beta}) not admissible")

    if kind == "continuous":
        ln, density = need("density")
        builders = {"gaussian": gaussian, "cauchy": cauchy, "pareto": lambda: pareto_continuous(alpha)}
        if density not in builders:
            raise ModelFileError(ln, f"unknown density {density!r}; use one of {sorted(builders)}")
        model = builders[density]()
        if (model.tail.alpha, model.tail.beta) != (alpha, beta):
            raise ModelFileError(entries.get("alpha", (ln,))[0], "alpha/beta do not match the named density")
        if "lattice" in entries:
            raise ModelFileError(entries["lattice"][0], "continuous models have no lattice")
    elif kind == "lattice":
        if "density" in entries:
            ln, density = entries["density"]
            if density != "zeta":
                raise ModelFileError(ln, f"lattice density must be 'zeta', got {density!r}")
            p = number("p", (1.0 + beta) / 2.0)
            cutoff = int(number("cutoff", float(DEFAULT_PARETO_CUTOFF)))
            try:
                model = zeta_model(alpha, p, cutoff)
            except ValueError as exc:
                raise ModelFileError(ln, str(exc)) from None
        else:
            support, weights = fractions("support"), fractions("weights")
            if len(support) != len(weights):
                raise ModelFileError(entries["weights"][0], "support and weights differ in length")
            try:
                model = lattice_model(name, support, weights, TailInfo(alpha, beta, (1.0 - beta) / 2.0))
            except ValueError as exc:
                raise ModelFileError(entries["support"][0], str(exc)) from None
        if "lattice" in entries:
            ln, value = entries["lattice"]
            try:
                h, a = (Fraction(tok.strip()) for tok in value.split(","))
            except (ValueError, ZeroDivisionError):
                raise ModelFileError(ln, "lattice must be 'h, a'") from None
            lat = model.lattice
            if not (math.isclose(float(h), lat.span_h) and math.isclose(float(a), lat.shift_a, abs_tol=1e-12)):
                raise ModelFileError(
                    ln, f"declared lattice ({h}, {a}) differs from support lattice ({lat.span_h}, {lat.shift_a})"
                )
    else:
        raise ModelFileError(kind_line, f"kind must be 'lattice' or 'continuous', got {kind!r}")
    object.__setattr__(model, "name", name)
    return model


def load_model_file(path: str | Path) -> StepModel:
    return parse_model_text(Path(path).read_text())


# ---------------------------------------------------------------- moments and norming


def _abs_atoms(model: StepModel, limit: float) -> tuple[NDArray, NDArray]:
    """Distinct |x| values up to `limit` and cumulative E[X^2; |X| <= v]."""
    law = model.law
    if isinstance(law, ZetaLaw):
        m = int(math.floor(limit))
        k = np.arange(1, max(m, 1) + 1, dtype=float)
        mass = (k ** (-law.alpha - 1.0)) / law.zeta
        mass[0] = 1.0 / law.zeta  # atom shifts at +-1 cancel in |X|
        return k, np.cumsum(k * k * mass)
    values = np.abs(model.support_values())
    order = np.argsort(values, kind="stable")
    v, p = values[order], model.probs[order]
    keep = (p > 0) & (v <= limit)
    v, p = v[keep], p[keep]
    uniq, inverse = np.unique(np.round(v, 12), return_inverse=True)
    acc = np.zeros(len(uniq))
    np.add.at(acc, inverse, v * v * p)
    return uniq, np.cumsum(acc)


def mu(model: StepModel, u: float) -> float:
    """Truncated second moment E[X^2; |X| <= u] / u^2."""
    if u <= 0:
        raise ValueError("u must be positive")
    if model.is_lattice:
        v, acc = _abs_atoms(model, u * (1 + 1e-12))
        return float(acc[-1]) / u**2 if len(v) and v[0] <= u * (1 + 1e-12) else 0.0
    law = model.law
    pts = [b for b in getattr(law, "breakpoints", ()) if b < u]
    half, _ = integrate.quad(lambda x: x * x * law.pdf(x), 0.0, u, points=pts or None, limit=400,
                             epsabs=1e-13, epsrel=1e-12)
    return 2.0 * half / u**2


class BracketError(RuntimeError):
    pass


def _norm_lattice(model: StepModel, n: int) -> float:
    # On [v_j, v_{j+1}) mu(u) = acc_j / u^2, so the crossing there is sqrt(n acc_j).
    bounded = not isinstance(model.law, ZetaLaw)
    limit = math.inf if bounded else 16.0
    while True:
        v, acc = _abs_atoms(model, limit)
        ok = np.nonzero(n * acc >= v * v * (1 - 1e-14))[0]
        if ok.size == 0:
            return float(v[0])
        cand = math.sqrt(n * acc[ok[-1]])
        # acc grows slower than u^2, so crossings well inside the window are final
        if bounded or cand < 0.5 * limit:
            return cand
        limit *= 2.0
        if limit > 1e12:
            raise BracketError(f"could not bracket c_n for n={n}")


def _norm_continuous(model: StepModel, n: int) -> float:
    target = 1.0 / n
    lo = 1e-3
    while mu(model, lo) < target:
        lo *= 2.0
        if lo > 1e12:
            raise BracketError(f"could not bracket c_n for n={n}")
    hi = lo * 2.0
    while mu(model, hi) >= target or mu(model, 2.0 * hi) >= target:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise BracketError(f"could not bracket c_n for n={n}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mu(model, mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass
class NormSeq:
    """Cached norming constants c_n of a model."""

    model: StepModel
    cache: dict[int, float] = field(default_factory=dict)

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError("n must be at least 1")
        if n not in self.cache:
            fn = _norm_lattice if self.model.is_lattice else _norm_continuous
            self.cache[n] = fn(self.model, n)
        return self.cache[n]


_NORMS: dict[int, NormSeq] = {}


def norm_seq(model: StepModel, n: int) -> float:
    """Last crossing c_n = sup{u : mu(u) >= 1/n}."""
    seq = _NORMS.setdefault(id(model), NormSeq(model))
    if seq.model is not model:
        seq = _NORMS[id(model)] = NormSeq(model)
    return seq(n)


def lattice_info(model: StepModel) -> Lattice | None:
    """(span, shift) of a lattice model, or None for non-lattice laws."""
    if not model.is_lattice:
        return None
    lat = model.require_lattice()
    nz = model.offsets[model.probs > 0]
    g = reduce(math.gcd, (int(k - nz[0]) for k in nz[1:]), 0)
    if g > 1:
        ratio = (lat.ratio + int(nz[0])) / g
        ratio -= math.floor(ratio)
        return Lattice(lat.span_h * g, float(ratio) * lat.span_h * g, ratio)
    return lat


def sample(model: StepModel, rng: np.random.Generator, size: int | None = None):
    """Draw steps; one float when size is None."""
    count = 1 if size is None else size
    if model.is_lattice:
        lat = model.require_lattice()
        values = lat.shift_a + lat.span_h * model.law.sample_offsets(rng, count)
    else:
        values = model.law.sample(rng, count)
    return float(values[0]) if size is None else values


def abs_tail(model: StepModel, u: float) -> float:
    """P(|X| > u) under the (untruncated) law."""
    law = model.law
    if hasattr(law, "abs_tail"):
        return law.abs_tail(u)
    values = np.abs(model.support_values())
    return float(model.probs[values > u].sum())
