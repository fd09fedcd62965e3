"""KDE and Welch tests, with the t CDF validated against an independent
quadrature oracle (direct integration of the density, stdlib lgamma)."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from fairalloc import DegenerateVarianceError, EmptySampleError, kde, welch_t


def t_density(x, df):
    log_norm = (
        math.lgamma((df + 1.0) / 2.0)
        - math.lgamma(df / 2.0)
        - 0.5 * math.log(df * math.pi)
    )
    return math.exp(log_norm) * (1.0 + x * x / df) ** (-(df + 1.0) / 2.0)


def oracle_two_sided_p(t, df):
    tail, _ = quad(t_density, abs(t), np.inf, args=(df,))
    return 2.0 * tail


class TestKde:
    def test_single_sample_closed_form(self):
        curve = kde([0.0], bandwidth=1.0, grid=np.array([0.0, 1.0]))
        assert curve.density[0] == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=1e-12)
        assert curve.density[1] == pytest.approx(math.exp(-0.5) / math.sqrt(2.0 * math.pi))

    def test_symmetry(self):
        curve = kde([-2.0, 2.0], bandwidth=0.5)
        flipped = np.interp(-curve.grid[::-1], curve.grid, curve.density)
        assert np.allclose(curve.density[::-1], flipped, atol=1e-12)

    def test_mass_close_to_one(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(0.0, 1.0, 200)
        curve = kde(samples, bandwidth=0.3, padding=8.0)
        mass = np.trapezoid(curve.density, curve.grid)  # independent of curve.mass()
        assert mass == pytest.approx(1.0, abs=1e-3)
        assert curve.mass() <= 1.0 + 1e-9
        assert np.all(curve.density >= 0.0)

    def test_custom_grid(self):
        grid = np.linspace(-1, 1, 11)
        curve = kde([0.0], bandwidth=1.0, grid=grid)
        assert curve.grid.tolist() == grid.tolist()

    def test_errors(self):
        with pytest.raises(EmptySampleError):
            kde([], bandwidth=0.2)
        with pytest.raises(ValueError):
            kde([1.0], bandwidth=0.0)


class TestWelch:
    def test_identical_sample_sets(self):
        result = welch_t([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0])
        assert result.t_statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_separated_means(self):
        a = np.array([0.0, 0.0, 0.0, 0.0]) + np.array([1e-4, -1e-4, 2e-4, -2e-4])
        b = np.array([1.0, 1.0, 1.0, 1.0]) + np.array([-1e-4, 1e-4, -2e-4, 2e-4])
        result = welch_t(a, b)
        assert abs(result.t_statistic) > 1e3
        assert result.p_value == pytest.approx(0.0, abs=1e-9)

    def test_textbook_fixture_vs_oracle(self):
        a = [1.0, 2.0, 3.0, 4.0, 5.0]
        b = [3.0, 4.0, 5.0, 6.0, 7.0]
        result = welch_t(a, b)
        # equal variances 2.5 and sizes 5: t = -2, Welch df = 8
        assert result.t_statistic == pytest.approx(-2.0)
        assert result.degrees_of_freedom == pytest.approx(8.0)
        assert result.p_value == pytest.approx(
            oracle_two_sided_p(result.t_statistic, result.degrees_of_freedom), abs=1e-6
        )

    @pytest.mark.parametrize("seed", range(10))
    def test_random_fixtures_vs_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(0.0, 1.0, rng.integers(3, 40))
        b = rng.normal(rng.uniform(-1, 1), 1.7, rng.integers(3, 40))
        result = welch_t(a, b)
        assert result.p_value == pytest.approx(
            oracle_two_sided_p(result.t_statistic, result.degrees_of_freedom), abs=1e-6
        )

    @pytest.mark.parametrize("seed", range(8))
    def test_antisymmetry(self, seed):
        rng = np.random.default_rng(100 + seed)
        a, b = rng.normal(0, 1, 12), rng.normal(0.3, 2, 9)
        fwd, rev = welch_t(a, b), welch_t(b, a)
        assert rev.t_statistic == pytest.approx(-fwd.t_statistic)
        assert rev.p_value == pytest.approx(fwd.p_value)

    @pytest.mark.parametrize("shift", [-3.0, 0.5, 10.0])
    def test_shift_invariance(self, shift):
        rng = np.random.default_rng(7)
        a, b = rng.normal(0, 1, 15), rng.normal(1, 1.5, 11)
        base = welch_t(a, b)
        moved = welch_t(a + shift, b + shift)
        assert moved.t_statistic == pytest.approx(base.t_statistic, rel=1e-9)

    def test_p_monotone_in_separation(self):
        rng = np.random.default_rng(9)
        a = rng.normal(0, 1, 20)
        b = rng.normal(0, 1, 20)
        p_values = [welch_t(a, b + gap).p_value for gap in (0.5, 1.0, 2.0, 4.0)]
        assert all(x > y for x, y in zip(p_values, p_values[1:]))

    def test_degenerate_errors(self):
        with pytest.raises(DegenerateVarianceError):
            welch_t([1.0], [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateVarianceError):
            welch_t([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
