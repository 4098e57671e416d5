import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladderwalk import steps
from ladderwalk.steps import (
    ModelFileError,
    abs_tail,
    get_model,
    lattice_info,
    lattice_model,
    lattice_of_support,
    mu,
    norm_seq,
    parse_model_text,
    sample,
)


def mean_zero_triple(left, right, zero_weight):
    """Support {-left, 0, right} with exactly zero mean."""
    rest = 1 - zero_weight
    return [-left, 0, right], [rest * Fraction(right, left + right), zero_weight, rest * Fraction(left, left + right)]


class TestMu:
    def test_simple_rw(self):
        assert mu(steps.simple_rw(), 3) == pytest.approx(1 / 9, abs=1e-15)
        assert mu(steps.simple_rw(), 0.5) == 0.0

    def test_gaussian_large_u(self):
        assert 0.99 <= mu(steps.gaussian(), 10.0) * 100 <= 1.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            mu(steps.simple_rw(), 0.0)


class TestNormSeq:
    def test_simple_rw_is_sqrt_n(self):
        m = steps.simple_rw()
        assert norm_seq(m, 100) == pytest.approx(10.0, abs=1e-12)
        for n in (1, 4, 37, 4096):
            assert norm_seq(m, n) == pytest.approx(math.sqrt(n), rel=1e-12)

    def test_unit_variance_continuous(self):
        assert norm_seq(steps.gaussian(), 10_000) == pytest.approx(100.0, rel=0.02)

    def test_pareto_slope(self):
        m = steps.zeta_model(1.5)
        ns = 2.0 ** np.arange(8, 17)
        cs = [norm_seq(m, int(n)) for n in ns]
        slope = np.polyfit(np.log(ns), np.log(cs), 1)[0]
        assert slope == pytest.approx(1 / 1.5, abs=0.05)

    @pytest.mark.parametrize("name", ["simple_rw", "lazy_rw", "shifted", "half_simple_rw", "pareto:1.5"])
    def test_crossing_condition(self, name):
        m = get_model(name)
        for n in (3, 50, 1000):
            c = norm_seq(m, n)
            below, above = n * mu(m, c * (1 - 1e-9)), n * mu(m, c * (1 + 1e-9))
            assert above <= 1 + 1e-6
            assert below >= 1 - 1e-6

    def test_tail_relation_pareto(self):
        m = steps.zeta_model(1.5)
        n = 2**16
        ratio = abs_tail(m, norm_seq(m, n)) * n * 1.5 / (2 - 1.5)
        assert ratio == pytest.approx(1.0, rel=0.15)

    @given(st.lists(st.integers(1, 10**6), min_size=2, max_size=6))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_n(self, ns):
        m = steps.lazy_rw()
        ns = sorted(ns)
        cs = [norm_seq(m, n) for n in ns]
        assert all(a <= b for a, b in zip(cs, cs[1:]))


class TestLattice:
    def test_simple_rw(self):
        lat = lattice_info(steps.simple_rw())
        assert (lat.span_h, lat.shift_a) == (2.0, 1.0)

    def test_lazy_rw(self):
        lat = lattice_info(steps.lazy_rw())
        assert (lat.span_h, lat.shift_a) == (1.0, 0.0)

    def test_gaussian_non_lattice(self):
        assert lattice_info(steps.gaussian()) is None

    def test_shifted(self):
        lat = lattice_info(steps.shifted_lattice(Fraction(1, 3)))
        assert lat.span_h == 1.0
        assert lat.shift_a == pytest.approx(1 / 3)

    @given(
        st.integers(1, 7),
        st.integers(-5, 5),
        st.lists(st.integers(-20, 20), min_size=2, max_size=6, unique=True),
    )
    def test_span_is_maximal(self, span, shift_num, ks):
        h = Fraction(span, 3)
        a = Fraction(shift_num, 7)
        pts = [a + k * h for k in ks]
        got_h, got_a = lattice_of_support(pts)
        diffs = [p - pts[0] for p in pts[1:]]
        # every support point is on the lattice
        assert all(((p - got_a) / got_h).denominator == 1 for p in pts)
        assert 0 <= got_a < got_h
        # no coarser span works: the differences' gcd in units of got_h is 1
        units = [int(d / got_h) for d in diffs]
        assert math.gcd(*units) == 1

    def test_registry_mean_zero(self):
        for name in ("simple_rw", "lazy_rw", "half_simple_rw", "shifted"):
            m = get_model(name)
            assert m.mean_zero
            assert float(np.dot(m.support_values(), m.probs)) == pytest.approx(0.0, abs=1e-12)
            assert m.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_pareto_bookkeeping(self):
        m = steps.zeta_model(1.5)
        assert m.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert 0 < m.truncated_mass < 1e-3
        assert float(np.dot(m.support_values(), m.probs)) == pytest.approx(0.0, abs=1e-10)

    @given(st.integers(1, 6), st.integers(1, 6), st.fractions(Fraction(0), Fraction(9, 10)))
    def test_constructed_models_are_centered(self, left, right, zero_weight):
        support, weights = mean_zero_triple(left, right, zero_weight)
        m = lattice_model("triple", support, weights)
        assert m.mean_zero
        assert m.probs.sum() == pytest.approx(1.0, abs=1e-12)


class TestSampling:
    def test_reproducible(self):
        m = steps.simple_rw()
        a = sample(m, np.random.default_rng(7), 50)
        b = sample(m, np.random.default_rng(7), 50)
        assert np.array_equal(a, b)
        assert set(np.unique(a)) <= {-1.0, 1.0}

    def test_mean_and_frequency(self):
        x = sample(steps.simple_rw(), np.random.default_rng(11), 10**6)
        assert abs(x.mean()) < 0.005
        assert abs(np.mean(x == -1) - 0.5) < 0.002

    def test_scalar(self):
        assert isinstance(sample(steps.gaussian(), np.random.default_rng(0)), float)

    def test_zeta_sampler_matches_pmf(self):
        m = steps.zeta_model(1.5)
        x = sample(m, np.random.default_rng(3), 400_000)
        for v in (-2, -1, 1, 3):
            p = m.probs[int(v) - m.k_min]
            se = math.sqrt(p * (1 - p) / len(x))
            assert abs(np.mean(x == v) - p) < 4 * se + m.truncated_mass


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        text = "name = tri\nkind = lattice\nsupport = -1, 0, 2\nweights = 2/5, 2/5, 1/5\n"
        path = tmp_path / "tri.model"
        path.write_text(text)
        m = get_model(str(path))
        assert m.name == "tri"
        assert m.pmf() == pytest.approx({-1.0: 0.4, 0.0: 0.4, 2.0: 0.2})

    def test_declared_lattice_checked(self):
        with pytest.raises(ModelFileError):
            parse_model_text("name = x\nkind = lattice\nsupport = -1, 1\nweights = 1, 1\nlattice = 1, 0\n")

    def test_error_cites_line(self):
        with pytest.raises(ModelFileError) as err:
            parse_model_text("name = x\nkind = lattice\nbogus_key = 3\n")
        assert "line 3" in str(err.value)

    def test_unknown_registry_name(self):
        with pytest.raises(KeyError):
            get_model("no_such_model")
