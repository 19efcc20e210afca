import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracbc.generators import apply_forward
from fracbc.grid import C0, L1, Grid, sample
from fracbc.semigroup import (BACKWARD, FORWARD, EvolutionProblem, SingularSystemError, evolve,
                              make_initial, psi, psi_inverse, psi_prime, resolvent,
                              restart_distribution, restart_mass_deficit, sample_weights,
                              semigroup_apply, steady_state, stopped_resolvent_check)
from fracbc.verify import heat_oracle_check, smooth_initial


@pytest.fixture
def bump32():
    return sample(Grid(32), smooth_initial, space=L1, check=False)


class TestEvolve:
    def test_time_zero_is_initial(self, bump32):
        sol = evolve(EvolutionProblem(FORWARD, 1.5, "DD", 32, bump32, (0.0, 0.1)))
        assert sol.states[0] is bump32

    def test_uniform_under_reflection(self):
        u0 = make_initial("uniform", 24, FORWARD)
        drift = apply_forward((1.5, "N*N", 24), u0)
        sol = evolve(EvolutionProblem(FORWARD, 1.5, "N*N", 24, u0, (0.0, 1e-4, 0.5)))
        if drift.l1_norm() < 1e-10:
            np.testing.assert_allclose(sol.at(0.5).values, 0.5, atol=1e-10)
        else:
            # uniform is not stationary: the solution must start moving along G* u
            slope = (sol.at(1e-4).values - u0.values) / 1e-4
            assert np.abs(slope - drift.values).max() < 1e-2 * np.abs(drift.values).max()
        assert sol.mass[-1] == pytest.approx(1.0, abs=1e-10)

    def test_dirichlet_mass_decreases(self, bump32):
        sol = evolve(EvolutionProblem(FORWARD, 1.5, "DD", 32, bump32, (0.0, 0.1, 0.2, 0.4, 0.8)))
        assert np.all(np.diff(sol.mass) < 0)

    def test_heat_oracle(self):
        err, bound = heat_oracle_check(n=64)
        assert err <= bound

    def test_density_mode_validates(self, bump32):
        with pytest.raises(ValueError):
            EvolutionProblem(BACKWARD, 1.5, "DD", 32, bump32, density=True)
        EvolutionProblem(FORWARD, 1.5, "DD", 32, bump32, density=True)

    @pytest.mark.parametrize("times", [(0.5, 0.1), (-1.0,), (0.2, 0.2)])
    def test_bad_times(self, bump32, times):
        with pytest.raises(ValueError):
            EvolutionProblem(FORWARD, 1.5, "DD", 32, bump32, times)

    def test_grid_mismatch(self, bump32):
        with pytest.raises(ValueError):
            EvolutionProblem(FORWARD, 1.5, "DD", 16, bump32)

    def test_large_system_path(self):
        n = 300
        u0 = sample(Grid(n), smooth_initial, samples=4, space=L1, check=False)
        u = semigroup_apply(1.5, "NN", n, u0, 0.05, FORWARD)
        assert u.integral() == pytest.approx(u0.integral(), abs=1e-9)
        assert u.values.min() > -1e-12

    def test_solution_exports(self, bump32, tmp_path):
        sol = evolve(EvolutionProblem(FORWARD, 1.5, "NN", 32, bump32, (0.0, 0.5)))
        sol.to_csv(tmp_path / "s.csv")
        sol.write_summary(tmp_path / "s.json")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "t,x,u" and len(lines) == 1 + 2 * bump32.values.size
        assert sol.summary()["direction"] == FORWARD
        with pytest.raises(KeyError):
            sol.at(0.3)


class TestResolvent:
    @pytest.fixture
    def f(self):
        return sample(Grid(20), lambda x: 1.0 - x * x)

    def test_yosida_limit(self, f):
        r = resolvent((1.5, "DD", 20), 1e6, f)
        assert np.abs(1e6 * r.values - f.values).max() < 1e-3

    def test_defining_equation(self, f):
        from fracbc.generators import apply_backward

        r = resolvent((1.5, "NN", 20), 0.7, f)
        back = 0.7 * r.values - apply_backward((1.5, "NN", 20), r).values
        assert np.abs(back - f.values).max() < 1e-10

    def test_positive(self):
        one = sample(Grid(20), lambda x: np.ones_like(x))
        assert resolvent((1.5, "DD", 20), 1.0, one).values.min() > 0

    def test_nonpositive_lambda(self, f):
        with pytest.raises(SingularSystemError):
            resolvent((1.5, "DD", 20), 0.0, f)


class TestStoppedProcess:
    def test_psi_at_zero(self):
        assert psi(0.0, 1.5) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(s=st.floats(1e-6, 20.0), alpha=st.floats(1.05, 2.0))
    def test_psi_increasing(self, s, alpha):
        assert psi_prime(s, alpha) > 0
        assert psi(s * 1.01, alpha) > psi(s, alpha)

    @pytest.mark.parametrize("lam", [0.05, 1.0, 30.0])
    def test_inverse(self, lam):
        assert psi(psi_inverse(lam, 1.5), 1.5) == pytest.approx(lam, rel=1e-12)

    def test_inverse_domain(self):
        with pytest.raises(ValueError):
            psi_inverse(-1.0, 1.5)

    def test_closed_form(self):
        rep = stopped_resolvent_check(1.5, 0.1, 2000)
        assert rep.max_error_nonpositive <= 1e-8
        assert rep.max_error <= 1e-8


class TestRestart:
    def test_first_probability(self):
        assert restart_distribution(1.5, 5)[0] == pytest.approx(0.5)

    @pytest.mark.parametrize("alpha", [1.1, 1.5, 1.9, 2.0])
    def test_non_negative(self, alpha):
        assert restart_distribution(alpha, 1000).min() >= 0

    @pytest.mark.parametrize("alpha", [1.3, 1.7])
    def test_telescoping(self, alpha):
        n = 100_000
        z = restart_distribution(alpha, n)
        deficit = 1.0 - math.fsum(z.tolist())
        assert deficit == pytest.approx(restart_mass_deficit(alpha, n), rel=1e-6)
        assert 0 < deficit < 10 ** (-(alpha - 1) * 4)


class TestInitial:
    def test_delta(self):
        f = make_initial("delta@0", 9)
        assert f.integral() == pytest.approx(1.0)
        assert np.count_nonzero(f.values.max(axis=1)) == 1

    def test_uniform(self):
        assert make_initial("uniform", 9).integral() == pytest.approx(1.0)
        assert make_initial("uniform", 9, BACKWARD).space == C0

    def test_poly(self):
        f = make_initial("poly:1,0,-1", 9, BACKWARD)
        assert f(0.4) == pytest.approx(0.84, rel=1e-12)

    def test_file(self, tmp_path):
        path = tmp_path / "init.csv"
        path.write_text("x,value\n1,2\n-1,0\n")
        f = make_initial(f"file:{path}", 9)
        assert f(0.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("tag", ["gauss", "poly:", "delta@3"])
    def test_errors(self, tag):
        with pytest.raises(ValueError):
            make_initial(tag, 9)

    def test_sample_weights(self):
        assert sample_weights(16).sum() == pytest.approx(1.0)


class TestSteadyState:
    def test_conservative_pair(self):
        ss = steady_state(1.5, "NN", 16)
        assert ss.stationary
        assert ss.density.integral() == pytest.approx(1.0)

    def test_killing_pair(self):
        assert not steady_state(1.5, "DD", 16).stationary
