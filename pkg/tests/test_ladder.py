from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ladderwalk import dp, ladder, steps
from ladderwalk.steps import norm_seq

from oracles import LAZY_SUPPORT, descent_moment_by_dp

LATTICE_MODELS = ["simple_rw", "lazy_rw", "half_simple_rw", "shifted", "pareto:1.5"]


@pytest.fixture(scope="module")
def renewals():
    out = {}
    for name in LATTICE_MODELS:
        m = steps.get_model(name)
        out[name] = (m, ladder.renewal_function(ladder.ladder_height_pmf(m)))
    return out


@pytest.fixture(scope="module")
def ladders():
    return {name: ladder.build_ladder(steps.get_model(name), N=256) for name in LATTICE_MODELS[:4]}


class TestLadderHeights:
    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw"])
    def test_skip_free_up(self, name):
        chi = ladder.ladder_height_pmf(steps.get_model(name), n_max=2000)
        assert chi.probs[0] == pytest.approx(1 - chi.defect_time, abs=1e-12)
        assert np.all(chi.probs[1:] == 0)
        assert chi.beyond == 0

    def test_pareto_bookkeeping(self):
        chi = ladder.ladder_height_pmf(steps.zeta_model(1.5), n_max=512, x_max=1024)
        assert chi.probs.sum() + chi.defect == pytest.approx(1.0, abs=1e-12)
        assert np.all(chi.probs >= 0)

    def test_heavy_route_matches_simulation(self):
        m = steps.zeta_model(1.5)
        chi = ladder.ladder_height_pmf(m, n_max=256, x_max=64)
        rng = np.random.default_rng(5)
        paths = 100_000
        pos = np.zeros(paths, dtype=np.int64)
        height = np.zeros(paths, dtype=np.int64)
        alive = np.ones(paths, dtype=bool)
        for _ in range(256):
            idx = np.nonzero(alive)[0]
            pos[idx] += m.law.sample_offsets(rng, idx.size)
            up = idx[pos[idx] > 0]
            height[up], alive[up] = pos[up], False
        for x in (1, 2, 8, 64):
            p = chi.probs[:x].sum()
            se = np.sqrt(p * (1 - p) / paths)
            assert abs(np.mean((height > 0) & (height <= x)) - p) < 4 * se


class TestRenewalFunction:
    def test_simple_rw_counts(self, renewals):
        _, R = renewals["simple_rw"]
        assert R(0.0) == 0.0
        assert R(1.0) == 1.0
        for m_ in range(1, 40):
            assert R(float(m_)) == pytest.approx(m_, abs=1e-9)
            assert R(m_ + 0.5) == pytest.approx(m_ + 1, abs=1e-9)

    def test_simple_rw_exact_by_renewal_of_exact_law(self):
        chi = ladder.LadderHeights(1.0, np.array([1.0] + [0.0] * 49), 0.0, 0.0, 1)
        R = ladder.renewal_function(chi)
        assert [R(float(m_)) for m_ in range(1, 50)] == list(range(1, 50))

    @pytest.mark.parametrize("name", LATTICE_MODELS)
    def test_monotone_left_continuous_floor(self, renewals, name):
        _, R = renewals[name]
        us = np.linspace(1e-3, R.u_max * 0.99, 400)
        vals = R(us)
        assert np.all(np.diff(vals) >= 0)
        assert np.all(vals >= 1)
        assert R(0.0) == 0.0
        lo, hi = R.bounds(us)
        assert np.all(lo <= vals + 1e-12) and np.all(vals <= hi + 1e-12)

    @pytest.mark.parametrize("name", LATTICE_MODELS)
    def test_increment_bound(self, renewals, name):
        _, R = renewals[name]
        const = R(1.0) + 1.0

        @given(st.floats(0, R.u_max / 2), st.floats(0, R.u_max / 2 - 1e-9))
        def check(u, v):
            assert R(u + v) - R(u) <= const * (v + 1) + 1e-9

        check()

    def test_defect_guard(self):
        chi = ladder.LadderHeights(1.0, np.array([0.3, 0.0]), 0.7, 0.0, 1)
        with pytest.raises(ValueError):
            ladder.renewal_function(chi)

    def test_csv(self, renewals, tmp_path):
        _, R = renewals["lazy_rw"]
        path = tmp_path / "h.csv"
        R.to_csv(path, [0.5, 1.5, 2.5])
        lines = path.read_text().splitlines()
        assert lines[0] == "u,H_low,H_high"
        assert len(lines) == 4


class TestDuality:
    def test_simple_rw_three(self):
        lo, hi = ladder.renewal_via_duality(steps.simple_rw(), 3.0, 400)
        assert lo <= 3.0 <= hi
        assert hi - lo < 0.05

    def test_near_zero(self):
        assert ladder.renewal_via_duality(steps.lazy_rw(), 1e-9, 50) == (1.0, 1.0)

    def test_lazy_five(self, renewals):
        _, R = renewals["lazy_rw"]
        lo, hi = ladder.renewal_via_duality(steps.lazy_rw(), 5.0, 400)
        assert lo <= R(5.0) <= hi

    @pytest.mark.parametrize("name", LATTICE_MODELS)
    def test_twenty_points(self, renewals, name):
        m, R = renewals[name]
        table = dp.survival_table(m, 400)
        for x in np.linspace(0.25, min(R.u_max, 12.0), 20):
            lo, hi = ladder.renewal_via_duality(m, x, 400, table)
            r_lo, r_hi = R.bounds(x)
            assert lo <= r_hi + 1e-12 and r_lo <= hi + 1e-12

    def test_partial_sums_approach_from_below(self):
        m = steps.lazy_rw()
        lows = [ladder.renewal_via_duality(m, 4.0, J)[0] for J in (50, 100, 200, 400)]
        assert lows == sorted(lows)
        assert lows[-1] <= ladder.renewal_wiener_hopf(m, 8.0, size=2**18)(4.0) + 1e-6


class TestWienerHopfRenewal:
    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "shifted"])
    def test_agrees_with_ladder_route(self, renewals, name):
        m, R = renewals[name]
        W = ladder.renewal_wiener_hopf(m, 20.0, size=2**18)
        xs = np.linspace(0.3, 19.5, 20)
        w_lo, w_hi = W.bounds(xs)
        r_lo, r_hi = R.bounds(xs)
        assert np.all(w_lo <= r_hi + 1e-9) and np.all(r_lo <= w_hi + 1e-9)
        assert np.max(np.abs(W(xs) - R(xs))) < 0.02

    def test_pareto_regular_variation(self):
        m = steps.zeta_model(1.5)
        W = ladder.renewal_wiener_hopf(m, 4096.0)
        xs = 2.0 ** np.arange(6, 13)
        slope = np.polyfit(np.log(xs), np.log(W(xs)), 1)[0]
        alpha_rho = m.limit_params().alpha * m.limit_params().rho
        assert slope == pytest.approx(alpha_rho, abs=0.08)

    def test_grid_guard(self):
        with pytest.raises(ValueError):
            ladder.renewal_wiener_hopf(steps.lazy_rw(), 1e6, size=2**12)


@pytest.mark.parametrize("name", LATTICE_MODELS)
def test_renewal_at_norming_scale(name):
    m = steps.get_model(name)
    table = dp.survival_table(m, 2048)
    size = 2**22 if name.startswith("pareto") else 2**20
    W = ladder.renewal_wiener_hopf(m, 1.01 * norm_seq(m, 2048), size=size)
    r1, r2 = (W(norm_seq(m, n)) / (n * table.survival[n]) for n in (1024, 2048))
    assert abs(r2 / r1 - 1) < 0.10


class TestDescent:
    def test_simple_rw(self, renewals):
        m, R = renewals["simple_rw"]
        est = ladder.expected_descent(m, R)
        assert est.status == "finite"
        assert est.value == pytest.approx(0.5, abs=1e-12)

    def test_lazy_rw_against_enumeration(self, renewals):
        m, R = renewals["lazy_rw"]
        moment, remaining = descent_moment_by_dp(*LAZY_SUPPORT, 40)
        assert remaining < 0.2  # the remaining paths sit above 0 and can only land on 0 later
        assert moment == Fraction(1, 4)
        assert ladder.expected_descent(m, R).value == pytest.approx(0.25, abs=1e-12)

    def test_pareto_infinite(self, renewals):
        m, R = renewals["pareto:1.5"]
        assert ladder.expected_descent(m, R).status == "infinite"

    def test_shifted_has_error_bar(self, renewals):
        m, R = renewals["shifted"]
        est = ladder.expected_descent(m, R)
        assert est.status == "finite" and 0 < est.error < 0.01


class TestOmegaAndQ:
    def test_half_simple_residues(self, renewals):
        m, R = renewals["half_simple_rw"]
        assert ladder.omega_big(m, 0.0, R) == 0.0
        assert ladder.omega_big(m, 0.5, R) > 0

    def test_lazy_omega_is_descent_sum(self, renewals):
        m, R = renewals["lazy_rw"]
        assert ladder.omega_big(m, 0.0, R) == pytest.approx(ladder.expected_descent(m, R).value, abs=1e-12)

    def test_rejects_infinite_descent(self, renewals):
        m, R = renewals["pareto:1.5"]
        with pytest.raises(ValueError):
            ladder.omega_big(m, 0.0, R)

    def test_rejects_off_grid(self, renewals):
        m, R = renewals["shifted"]
        with pytest.raises(ValueError):
            ladder.omega_big(m, 0.1, R)

    def test_lazy_constant(self, ladders):
        d = ladders["lazy_rw"]
        vals = {round(d.q_n_minus(n), 12) for n in range(1, 60)}
        assert len(vals) == 1

    def test_simple_alternates(self, ladders):
        d = ladders["simple_rw"]
        assert all(d.q_n_minus(n) == 0 for n in range(1, 60, 2))
        assert all(d.q_n_minus(n) > 0 for n in range(2, 60, 2))

    def test_shifted_three_values(self, ladders):
        d = ladders["shifted"]
        seq = [d.q_n_minus(n) for n in range(1, 61)]
        assert len({round(v, 12) for v in seq}) == 3
        assert all(seq[i] == seq[i + 3] for i in range(57))

    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "half_simple_rw", "shifted"])
    def test_positive_floor(self, ladders, name):
        d = ladders[name]
        positive = [v for v in (d.q_n_minus(n) for n in range(1, 257)) if v > 0]
        assert positive and min(positive) > 0.1
        assert max(positive) < 10

    def test_csv(self, ladders, tmp_path):
        path = tmp_path / "q.csv"
        ladders["shifted"].to_csv(path, range(1, 7))
        lines = path.read_text().splitlines()
        assert lines[0] == "n,Q_n_minus,residue_class"
        assert len(lines) == 7

    def test_small_deviation_constant(self, renewals):
        _, R = renewals["lazy_rw"]
        # H = 1 on (0, 1], 2 on (1, 2]: integral over [0.5, 1.5] is 1.5, minus H(0.5) = 1
        assert R.integral(0.5) == pytest.approx(R(0.75) * 0.5 + R(1.25) * 0.5, abs=1e-12)
        assert R.small_deviation_constant(0.5) == pytest.approx(R.integral(0.5) - R(0.5), abs=1e-12)
