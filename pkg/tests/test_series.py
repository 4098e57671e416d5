import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderwalk import dp, steps
from ladderwalk.steps import lattice_model
from ladderwalk.series import (
    PowerSeries,
    factorization_residuals,
    series_exp,
    series_log,
    series_mul,
    spitzer_averages,
    tau_pmf_from_positivity,
    tau_tail,
    verify_factorization,
    write_csv,
)

from oracles import central_binomial_tail, sqrt_one_minus_z


@st.composite
def walk_positivity(draw):
    """P(S_n <= 0), n = 1..N, of a random mean-zero walk on {-l, 0, r}."""
    left, right = draw(st.integers(1, 4)), draw(st.integers(1, 4))
    zero = draw(st.fractions(Fraction(0), Fraction(4, 5), max_denominator=10))
    rest = 1 - zero
    m = lattice_model("w", [-left, 0, right], [rest * Fraction(right, left + right), zero, rest * Fraction(left, left + right)])
    return dp.positivity_probabilities(m, draw(st.integers(1, 120)))["le"]


def ps(*coeffs):
    return PowerSeries(np.array(coeffs, dtype=float))


class TestArithmetic:
    def test_mul_small(self):
        assert np.allclose(series_mul(ps(1, 1, 0), ps(1, -1, 0)).coeffs, [1, 0, -1])
        a = ps(0.3, -2, 5, 1)
        assert np.array_equal(series_mul(a, ps(1, 0, 0, 0)).coeffs, a.coeffs)

    def test_geometric_telescopes(self):
        geo = PowerSeries(np.ones(9))
        one_minus = PowerSeries(np.array([1, -1] + [0] * 7, dtype=float))
        assert np.allclose(series_mul(geo, one_minus).coeffs, [1] + [0] * 8, atol=1e-15)

    def test_mul_order_mismatch(self):
        with pytest.raises(ValueError):
            series_mul(ps(1, 2), ps(1, 2, 3))

    def test_exp_zero_and_z(self):
        assert np.array_equal(series_exp(ps(0, 0, 0)).coeffs, [1, 0, 0])
        e = series_exp(PowerSeries(np.array([0, 1] + [0] * 9, dtype=float))).coeffs
        assert np.allclose(e, [1 / math.factorial(n) for n in range(11)], atol=1e-12)

    def test_exp_of_log_one_minus_z(self):
        n = 64
        a = np.zeros(n + 1)
        a[1:] = -1.0 / np.arange(1, n + 1)
        e = series_exp(PowerSeries(a)).coeffs
        assert e[0] == 1 and e[1] == pytest.approx(-1, abs=1e-14)
        assert np.max(np.abs(e[2:])) < 1e-12

    def test_exp_rejects_constant(self):
        with pytest.raises(ValueError):
            series_exp(ps(0.1, 1))

    @given(st.lists(st.floats(-1, 1), min_size=1, max_size=512))
    @settings(max_examples=30, deadline=None)
    def test_exp_log_round_trip(self, tail):
        a = PowerSeries(np.array([1.0, *tail]))
        back = series_exp(series_log(a)).coeffs
        scale = max(1.0, float(np.max(np.abs(a.coeffs))))
        # log of a random series can grow geometrically; compare relative to size
        ref = np.abs(series_log(a).coeffs).max()
        if ref < 1e6:
            assert np.max(np.abs(back - a.coeffs)) <= 1e-11 * scale * max(1.0, ref)

    @given(st.lists(st.floats(-2, 2), min_size=2, max_size=40), st.lists(st.floats(-2, 2), min_size=2, max_size=40))
    def test_mul_commutes_and_truncates(self, x, y):
        n = min(len(x), len(y))
        a, b = PowerSeries(np.array(x[:n])), PowerSeries(np.array(y[:n]))
        ab, ba = series_mul(a, b).coeffs, series_mul(b, a).coeffs
        assert len(ab) == n
        assert np.allclose(ab, ba, atol=1e-12)
        assert np.allclose(ab, np.convolve(x[:n], y[:n])[:n], atol=1e-12)


class TestTauFromPositivity:
    def test_symmetric_continuous(self):
        pmf = tau_pmf_from_positivity(np.full(10, 0.5), sign="plus")
        oracle = [-float(c) for c in sqrt_one_minus_z(11)[1:]]
        assert pmf[:3] == pytest.approx([0.5, 0.125, 0.0625], abs=1e-15)
        assert np.allclose(pmf, oracle, atol=1e-15)

    def test_always_down(self):
        pmf = tau_pmf_from_positivity(np.ones(20))
        assert pmf[0] == 1 and np.all(pmf[1:] == 0)

    def test_simple_rw_from_dp(self):
        q = dp.positivity_probabilities(steps.simple_rw(), 10)["le"]
        pmf = tau_pmf_from_positivity(q, 10)
        assert pmf[:3] == pytest.approx([0.5, 0.25, 0.0], abs=1e-14)

    @pytest.mark.parametrize("bad", [[0.5, 1.2], [-0.1], [float("nan")]])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            tau_pmf_from_positivity(bad)

    @given(walk_positivity())
    @settings(max_examples=40, deadline=None)
    def test_pmf_is_subprobability(self, q):
        pmf = tau_pmf_from_positivity(q)
        assert np.all((pmf >= 0) & (pmf <= 1))
        assert np.all(np.cumsum(pmf) <= 1 + 1e-12)


class TestFactorization:
    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "pareto:1.5", "shifted"])
    def test_lattice_models(self, name):
        m = steps.get_model(name)
        pos = dp.positivity_probabilities(m, 200)
        plus = tau_pmf_from_positivity(pos["gt"], 200, "plus")
        minus = tau_pmf_from_positivity(pos["le"], 200, "minus")
        assert verify_factorization(plus, minus, 200) <= 1e-10

    def test_sqrt_squared(self):
        half = tau_pmf_from_positivity(np.full(200, 0.5), sign="plus")
        assert verify_factorization(half, half) <= 1e-12

    def test_residual_vector(self):
        res = factorization_residuals([1.0], [0.0])
        assert np.allclose(res, [0, 0])


class TestTail:
    def test_simple_rw(self):
        q = dp.positivity_probabilities(steps.simple_rw(), 5)["le"]
        assert tau_tail(tau_pmf_from_positivity(q))[1] == pytest.approx(0.25, abs=1e-15)

    def test_degenerate(self):
        assert tau_tail(tau_pmf_from_positivity(np.ones(5)))[0] == 0

    def test_central_binomial(self):
        tail = tau_tail(tau_pmf_from_positivity(np.full(60, 0.5), sign="plus"))
        assert np.allclose(tail, [float(central_binomial_tail(n)) for n in range(1, 61)], atol=1e-14)

    @given(walk_positivity())
    @settings(max_examples=30, deadline=None)
    def test_non_increasing(self, q):
        tail = tau_tail(tau_pmf_from_positivity(q))
        assert np.all(np.diff(tail) <= 1e-15)
        assert np.all((tail >= 0) & (tail <= 1))


def test_spitzer_average_symmetric():
    q = dp.positivity_probabilities(steps.lazy_rw(), 400)["gt"]
    assert spitzer_averages(q)[-1] == pytest.approx(0.5, abs=0.03)


def test_csv_columns(tmp_path):
    half = tau_pmf_from_positivity(np.full(8, 0.5), sign="plus")
    path = tmp_path / "wh.csv"
    write_csv(path, half, half)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,pmf_plus,pmf_minus,tail_plus,tail_minus,factorization_residual"
    assert len(lines) == 9
