import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from fracbc.generators import rate_matrix
from fracbc.stochastic import (KILLED, EmptyEnsembleError, JumpKernel, alias_draw, alias_table,
                               censored_reentry_law, empirical_density, first_reentry_sample,
                               simulate, simulate_feller)
from fracbc.verify import compare_mc_pde, empirical_generator_check


class TestAlias:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 0))
    def test_reconstructs_weights(self, weights):
        w = np.asarray(weights)
        prob, alias = alias_table(w)
        k = w.size
        implied = prob / k
        np.add.at(implied, alias, (1.0 - prob) / k)
        np.testing.assert_allclose(implied, w / w.sum(), atol=1e-12)

    def test_draws_follow_weights(self):
        prob, alias = alias_table([1.0, 3.0])
        rng = np.random.default_rng(3)
        draws = alias_draw(prob[None], alias[None], np.zeros(200_000, dtype=int), rng)
        assert np.mean(draws == 1) == pytest.approx(0.75, abs=0.005)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            alias_table([0.0, 0.0])
        with pytest.raises(ValueError):
            alias_table([1.0, -1.0])


class TestSimulate:
    def test_survival_matches_chain(self):
        n, t, paths = 10, 0.3, 40_000
        ens = simulate((1.5, "DD", n), 5, t, paths, seed=11)
        g = rate_matrix(1.5, "DD", n).dense
        exact = expm(t * g)[4].sum()
        se = np.sqrt(exact * (1 - exact) / paths)
        assert abs(ens.survival(t) - exact) <= 3 * se

    def test_reflecting_never_kills(self):
        ens = simulate((1.5, "N*N", 12), 1, 2.0, 5000, seed=2)
        assert not np.any(ens.killed)
        assert np.all(ens.snapshots != KILLED)

    def test_single_path_is_reproducible(self):
        a = simulate((1.7, "DN", 8), 3, 1.0, 1, seed=99, record=1)
        b = simulate((1.7, "DN", 8), 3, 1.0, 1, seed=99, record=1)
        assert a.records == b.records

    def test_initial_state_range(self):
        with pytest.raises(ValueError):
            simulate((1.5, "DD", 8), 0, 1.0, 10, seed=0)

    def test_write_paths(self, tmp_path):
        ens = simulate((1.5, "DD", 6), 2, 0.5, 10, seed=0, record=3)
        ens.write_paths(tmp_path / "p.csv")
        rows = (tmp_path / "p.csv").read_text().splitlines()
        assert rows[0] == "path_id,t,state,event"
        assert {r.split(",")[0] for r in rows[1:]} == {"0", "1", "2"}

    def test_kernel_holding_rates(self):
        g = rate_matrix(1.5, "NN", 5).dense
        k = JumpKernel(g)
        np.testing.assert_allclose(k.hold, -np.diag(g))


class TestDensity:
    def test_time_zero(self):
        ens = simulate((1.5, "DD", 8), 4, 1.0, 500, seed=1, times=[0.0])
        hist = empirical_density(ens, 0.0)
        assert hist.mass[3] == 1.0 and hist.mass.sum() == 1.0

    def test_sub_probability(self):
        ens = simulate((1.5, "DD", 8), 4, 1.0, 2000, seed=1)
        assert empirical_density(ens, 1.0, bins=5).total <= 1.0 + 1e-12

    def test_empty(self):
        ens = simulate((1.5, "DD", 8), 4, 1.0, 0, seed=1)
        with pytest.raises(EmptyEnsembleError):
            empirical_density(ens, 1.0)

    def test_matches_forward_equation(self):
        rep = compare_mc_pde(1.5, "DD", 64, 0.5, 100_000, seed=5)
        assert rep.max_abs_z <= 4.0
        assert abs(rep.killed_z) <= 3.0

    def test_feller_paths_start_in_grid(self):
        ens = simulate_feller((1.5, "NN", 16), 0.0, [0.0, 0.1], 100, seed=0)
        hist = empirical_density(ens, 0.0)
        assert hist.mass.argmax() == 8


class TestReentry:
    def test_first_state(self):
        s = first_reentry_sample(1.5, 20_000, seed=4, window=500)
        assert abs(s.frequencies[0] - 0.5) <= 3 * s.stderr[0] + abs(s.bias[0])

    def test_nearest_neighbour_case(self):
        s = first_reentry_sample(2.0, 2000, seed=0, window=200)
        assert s.counts[1:].sum() == 0 and s.overshoot == 0

    def test_censored_law_approaches_theory(self):
        from fracbc.semigroup import restart_distribution

        law = censored_reentry_law(1.5, 2000, 10)
        assert np.abs(law - restart_distribution(1.5, 10)).max() < 1e-3


@pytest.mark.parametrize("n", [3, 6])
def test_empirical_generator(pair, n):
    z, stray, jumps = empirical_generator_check(1.5, pair, n=n)
    assert jumps >= 1e6
    assert stray == 0
    assert z <= 5.0


def test_killed_plus_surviving_is_one():
    ens = simulate((1.3, "ND", 10), 2, 1.5, 3001, seed=8)
    states = ens.state_at(1.5)
    assert np.count_nonzero(states == KILLED) + np.count_nonzero(states != KILLED) == 3001
    assert np.count_nonzero(states == KILLED) == np.count_nonzero(np.isfinite(ens.kill_time))


def test_monte_carlo_error_rate():
    """RMS bin error against the forward equation shrinks like N^(-1/2)."""
    sizes = np.array([2_000, 20_000, 200_000])
    rms = []
    for i, size in enumerate(sizes):
        rep = compare_mc_pde(1.5, "NN", 32, 0.5, int(size), seed=30 + i)
        rms.append(np.sqrt(np.mean((rep.mc_mass - rep.pde_mass) ** 2)))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    assert -0.8 < slope < -0.2
