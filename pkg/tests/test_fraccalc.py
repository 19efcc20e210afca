import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import binom

from fracbc.fraccalc import (FractionalOrder, GrunwaldTable, SeriesDivergenceError, as_order,
                             frac_integral, grunwald_convolve_check, grunwald_convolve_mp,
                             grunwald_partial_sum, grunwald_table, grunwald_table_mp,
                             grunwald_weights, mittag_h, power_eval)
from fracbc.grid import L1, Grid, sample


class TestGrunwaldTable:
    def test_first_entry_is_one(self):
        assert grunwald_table(1.5, 10)[0] == 1.0

    def test_integer_order_two(self):
        np.testing.assert_array_equal(grunwald_weights(2.0, 6), [1, -2, 1, 0, 0, 0, 0])

    def test_half_order_first_weight(self):
        assert grunwald_table(0.5, 3)[1] == pytest.approx(-0.5, abs=1e-15)

    def test_partial_sum_small_k(self):
        lhs = sum(grunwald_weights(1.5, 4))
        assert lhs == pytest.approx(grunwald_weights(0.5, 4)[4], rel=1e-13)

    @pytest.mark.parametrize("q", [-0.7, 0.3, 1.1, 1.5, 1.99])
    def test_matches_signed_binomials(self, q):
        k = np.arange(30)
        expected = (-1.0) ** k * binom(q, k)
        np.testing.assert_allclose(grunwald_weights(q, 29), expected, rtol=1e-12, atol=1e-300)

    def test_table_is_read_only_and_typed(self):
        table = grunwald_table(1.3, 5)
        assert isinstance(table, GrunwaldTable)
        assert table.k_max == 5 and len(table) == 6
        with pytest.raises(ValueError):
            table.coeffs[0] = 2.0

    def test_negative_kmax_rejected(self):
        with pytest.raises(ValueError):
            grunwald_table(1.5, -1)

    def test_mp_table_agrees(self):
        mp = grunwald_table_mp(1.7, 200)
        np.testing.assert_allclose([float(v) for v in mp], grunwald_weights(1.7, 200), rtol=1e-13)


class TestConvolution:
    def test_equal_orders(self):
        lhs, rhs = grunwald_convolve_check(0.75, 0.75, 1)
        assert lhs == pytest.approx(-1.5) and rhs == pytest.approx(-1.5)

    def test_identity_element(self):
        lhs, rhs = grunwald_convolve_check(1.5, 0.0, 3)
        assert lhs == pytest.approx(grunwald_weights(1.5, 3)[3], rel=1e-15)
        assert rhs == pytest.approx(lhs, rel=1e-14)

    def test_binomial(self):
        lhs, rhs = grunwald_convolve_check(1.0, 1.0, 2)
        assert lhs == pytest.approx(1.0) and rhs == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(q=st.floats(-1.5, 2.0), Q=st.floats(-1.5, 2.0), k=st.integers(0, 60))
    def test_identity_property(self, q, Q, k):
        lhs, rhs = grunwald_convolve_mp(q, Q, k)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            grunwald_convolve_check(1.0, 1.0, -1)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.01, 2.0), k=st.integers(0, 300))
def test_partial_sum_property(alpha, k):
    assert grunwald_partial_sum(alpha, k) == pytest.approx(
        grunwald_weights(alpha - 1.0, k)[k], rel=1e-8, abs=1e-14)


class TestOrder:
    @pytest.mark.parametrize("bad", [1.0, 0.5, 2.01, float("nan")])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            as_order(bad)

    def test_wraps(self):
        assert float(FractionalOrder(1.5)) == 1.5
        assert as_order(FractionalOrder(2.0)) == 2.0


class TestPower:
    def test_constant(self):
        assert power_eval(0.0, "+", 0.3) == 1.0

    def test_linear(self):
        assert power_eval(1.0, "+", 1.0) == 2.0

    def test_gamma_value(self):
        assert power_eval(1.5, "+", 0.0) == pytest.approx(0.7522527781, rel=1e-10)

    def test_mirror(self, rng):
        x = rng.uniform(-1, 1, 50)
        np.testing.assert_allclose(power_eval(1.3, "-", x), power_eval(1.3, "+", -x))

    def test_singular_endpoint(self):
        assert math.isinf(power_eval(-0.5, "+", -1.0))

    @pytest.mark.parametrize("beta,side,x", [(-1.0, "+", 0.0), (1.0, "x", 0.0), (1.0, "+", 1.5)])
    def test_errors(self, beta, side, x):
        with pytest.raises(ValueError):
            power_eval(beta, side, x)


class TestFracIntegral:
    @pytest.fixture
    def grid(self):
        return Grid(31)

    def test_integrates_constant(self, grid):
        f = sample(grid, lambda x: np.ones_like(x), space=L1, check=False)
        out = frac_integral(1.0, f)
        x = out.points()
        np.testing.assert_allclose(out.values, 1.0 + x, atol=1e-12)

    def test_semigroup_property(self, grid):
        f = sample(grid, lambda x: np.ones_like(x), space=L1, check=False)
        two = frac_integral(0.7, frac_integral(0.5, f))
        one = frac_integral(1.2, f)
        assert np.max(np.abs(two.values - one.values)) < 1e-3

    def test_power_to_power(self, grid):
        f = sample(grid, lambda x: power_eval(0.5, "+", x), space=L1, check=False)
        out = frac_integral(0.5, f)
        exact = power_eval(1.0, "+", out.points())
        assert np.max(np.abs(out.values - exact)) < 1e-3

    def test_vanishes_at_left_end(self, grid):
        f = sample(grid, np.cos, space=L1, check=False)
        assert frac_integral(0.5, f).values[0, 0] == pytest.approx(0.0, abs=1e-14)

    def test_right_side_mirrors(self, grid):
        f = sample(grid, lambda x: np.ones_like(x), space=L1, check=False)
        out = frac_integral(1.0, f, "-")
        np.testing.assert_allclose(out.values, 1.0 - out.points(), atol=1e-12)

    def test_rejects_nonpositive_order(self, grid):
        f = sample(grid, np.cos, space=L1, check=False)
        with pytest.raises(ValueError):
            frac_integral(0.0, f)


class TestMittag:
    def test_left_endpoint(self):
        assert mittag_h(1.5, 0.0, "+", -1.0) == 1.0

    @pytest.mark.parametrize("alpha,beta", [(1.5, 0.0), (1.2, 0.2), (1.9, 0.9), (2.0, 1.0)])
    def test_shift_identity(self, alpha, beta, rng):
        x = rng.uniform(-1, 1, 20)
        lhs = mittag_h(alpha, beta, "+", x) - power_eval(beta, "+", x)
        np.testing.assert_allclose(lhs, mittag_h(alpha, beta + alpha, "+", x), rtol=1e-12,
                                   atol=1e-14)

    def test_cosh_closed_form(self):
        assert mittag_h(2.0, 0.0, "+", 0.0) == pytest.approx(math.cosh(1.0), rel=1e-14)

    def test_sides_mirror(self):
        assert mittag_h(1.5, 0.5, "-", 0.3) == pytest.approx(mittag_h(1.5, 0.5, "+", -0.3))

    def test_divergence_reported(self):
        with pytest.raises(SeriesDivergenceError):
            mittag_h(1.5, 0.0, "+", 1.0, max_terms=2)
