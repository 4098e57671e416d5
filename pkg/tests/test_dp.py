from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderwalk import dp, series, steps
from ladderwalk.steps import lattice_model

from oracles import (
    binomial_pmf,
    conditional_endpoint_law,
    survival_by_enumeration,
    tau_minus_by_dp,
)

SIMPLE = ([-1, 1], [Fraction(1, 2)] * 2)
LAZY = ([-1, 0, 1], [Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)])


@st.composite
def small_lattice_models(draw):
    """Mean-zero models on a handful of integer points."""
    left = draw(st.integers(1, 3))
    right = draw(st.integers(1, 3))
    zero = draw(st.fractions(Fraction(0), Fraction(3, 4), max_denominator=8))
    rest = 1 - zero
    support = [-left, 0, right]
    weights = [rest * Fraction(right, left + right), zero, rest * Fraction(left, left + right)]
    return support, weights


class TestUnconditioned:
    def test_simple_two_steps(self):
        assert dp.unconditioned_pmf(steps.simple_rw(), 2).as_dict() == pytest.approx({-2.0: 0.25, 0.0: 0.5, 2.0: 0.25})

    def test_lazy_one_step(self):
        assert dp.unconditioned_pmf(steps.lazy_rw(), 1).as_dict() == pytest.approx({-1.0: 0.25, 0.0: 0.5, 1.0: 0.25})

    def test_central_binomial(self):
        pmf = dp.unconditioned_pmf(steps.simple_rw(), 10).as_dict()
        assert pmf[0.0] == pytest.approx(252 / 1024, abs=1e-15)
        assert pmf[0.0] == pytest.approx(float(binomial_pmf(10, 5)), abs=1e-15)

    def test_mass_one(self):
        pmf = dp.unconditioned_pmf(steps.zeta_model(1.5), 30)
        assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_rejects_continuous(self):
        with pytest.raises(ValueError):
            dp.unconditioned_pmf(steps.gaussian(), 3)


class TestSurvivalTable:
    def test_simple_rw_small_n(self):
        t = dp.survival_table(steps.simple_rw(), 4)
        assert t.survival[1] == 0.5
        assert t.survival[2] == 0.25
        assert dict(zip(t.values(1), t.row(1).probs)) == {1.0: 0.5}

    def test_lazy_two_steps(self):
        t = dp.survival_table(steps.lazy_rw(), 2)
        assert t.survival[2] == pytest.approx(3 / 16, abs=1e-15)
        assert t.survival[2] == float(survival_by_enumeration(*LAZY, 2))

    @given(small_lattice_models(), st.integers(1, 6))
    @settings(max_examples=25, deadline=None)
    def test_matches_enumeration(self, model, n):
        support, weights = model
        m = lattice_model("t", support, weights)
        t = dp.survival_table(m, n)
        assert t.survival[n] == pytest.approx(float(survival_by_enumeration(support, weights, n)), abs=1e-14)

    @given(small_lattice_models())
    @settings(max_examples=20, deadline=None)
    def test_invariants(self, model):
        m = lattice_model("t", *model)
        t = dp.survival_table(m, 60)
        surv = t.survival
        assert np.all(np.diff(surv) <= 1e-15)
        for n in range(1, 61):
            row = t.row(n)
            assert np.all(row.probs >= 0)
            assert abs(row.probs.sum() - surv[n]) <= row.mass_defect + 1e-12

    def test_csv_order(self, tmp_path):
        t = dp.survival_table(steps.lazy_rw(), 5)
        path = tmp_path / "t.csv"
        t.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "n,offset,prob,survival,mass_defect"
        keys = [(int(l.split(",")[0]), int(l.split(",")[1])) for l in lines[1:]]
        assert keys == sorted(keys)


class TestTauMinus:
    def test_simple_rw(self):
        pmf = dp.tau_minus_pmf_exact(dp.survival_table(steps.simple_rw(), 40))  # pmf[n - 1] = P(tau- = n)
        assert pmf[0] == 0.5 and pmf[1] == 0.25 and pmf[2] == 0.0
        assert all(pmf[k - 1] == 0.0 for k in range(3, 41, 2))

    def test_lazy_rw(self):
        pmf = dp.tau_minus_pmf_exact(dp.survival_table(steps.lazy_rw(), 5))
        assert pmf[0] == pytest.approx(0.75, abs=1e-15)

    @pytest.mark.parametrize("model,ref", [(steps.simple_rw, SIMPLE), (steps.lazy_rw, LAZY)])
    def test_matches_dictionary_dp(self, model, ref):
        pmf = dp.tau_minus_pmf_exact(dp.survival_table(model(), 30))
        oracle = [float(v) for v in tau_minus_by_dp(*ref, 30)]
        assert np.allclose(pmf, oracle, atol=1e-14)

    def test_mass_balance(self):
        t = dp.survival_table(steps.zeta_model(1.5), 150)
        pmf = dp.tau_minus_pmf_exact(t)
        assert pmf.sum() + t.survival[150] == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw"])
    def test_matches_series(self, name):
        m = steps.get_model(name)
        q = dp.positivity_probabilities(m, 200)["le"]
        wh = series.tau_pmf_from_positivity(q, 200, "minus")
        exact = dp.tau_minus_pmf_exact(dp.survival_table(m, 200))
        assert np.max(np.abs(wh - exact)) <= 1e-9


class TestConditionalLocal:
    def test_simple_small_n(self):
        t = dp.survival_table(steps.simple_rw(), 4)
        first = {float(v): dp.conditional_local(t, 1, int(x)) for v, x in zip(t.values(1), t.row(1).offsets)}
        second = {float(v): dp.conditional_local(t, 2, int(x)) for v, x in zip(t.values(2), t.row(2).offsets)}
        assert first == {1.0: 1.0}
        assert second == {2.0: 1.0}

    def test_enumeration_n4(self):
        t = dp.survival_table(steps.simple_rw(), 4)
        law = conditional_endpoint_law(*SIMPLE, 4)
        assert law[Fraction(2)] == Fraction(2, 3)
        got = {float(v): dp.conditional_local(t, 4, int(x)) for v, x in zip(t.values(4), t.row(4).offsets)}
        assert got[2.0] == pytest.approx(2 / 3, abs=1e-15)
        assert got[4.0] == pytest.approx(1 / 3, abs=1e-15)


class TestRecurrences:
    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "shifted", "half_simple_rw"])
    def test_rep(self, name):
        assert dp.verify_recurrence(steps.get_model(name), 64) <= 1e-10

    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "shifted"])
    def test_rep2(self, name):
        assert dp.verify_level_recurrence(steps.get_model(name), 64) <= 1e-9

    def test_first_row_exact(self):
        assert dp.verify_recurrence(steps.lazy_rw(), 1) == 0.0

    @given(small_lattice_models())
    @settings(max_examples=10, deadline=None)
    def test_rep_random_models(self, model):
        assert dp.verify_recurrence(lattice_model("t", *model), 24) <= 1e-10


def test_duality_partial_sums_increase():
    t = dp.survival_table(steps.lazy_rw(), 300)
    partial = 1.0 + np.cumsum([t.B(j, 5.0) for j in range(1, 301)])
    assert np.all(np.diff(partial) >= 0)


def test_successive_histograms_converge():
    m = steps.simple_rw()
    t = dp.survival_table(m, 4096)
    grid = np.linspace(0, 5, 501)

    def cdf(n):
        # continuity-corrected: piecewise linear between the lattice atoms
        vals = t.values(n) / np.sqrt(n)
        mass = np.cumsum(t.row(n).probs) / t.row(n).survival
        return np.interp(grid, vals, mass, left=0.0, right=1.0)

    d_first = np.max(np.abs(cdf(1024) - cdf(2048)))
    d_second = np.max(np.abs(cdf(2048) - cdf(4096)))
    assert d_second < d_first < 0.05
