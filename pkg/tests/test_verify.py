import numpy as np
import pytest

from fracbc.fraccalc import mittag_h
from fracbc.grid import C0, L1
from fracbc.verify import (THETA_PROBES, ApproxPowerFunction, CheckResult, ConvergenceStudy,
                           adjointness_check, grunwald_convergence_check, non_increasing,
                           range_identity_alpha2, range_identity_check, range_refinement,
                           run_suite, self_convergence, sine_series_heat, smooth_initial,
                           theta_probe, theta_values)

ALL_PROBES = [(space, beta, pair) for (space, beta), table in THETA_PROBES.items()
              for pair in table]


class TestGrunwaldConvergence:
    def test_second_difference_of_cubic(self):
        # exact away from -1; the zero extension of p_3 costs O(h) on the
        # first grid only, hence O(h^2) in L1
        l1 = grunwald_convergence_check(2.0, 3.0, 1, [16, 32, 64, 128], mode="L1")
        assert min(l1.orders) > 1.9
        sup = grunwald_convergence_check(2.0, 3.0, 1, [16, 32, 64, 128])
        assert all(e <= 2.0 / (n + 1) for e, n in zip(sup.errors, sup.n_sequence))

    def test_sup_mode_order(self):
        rep = grunwald_convergence_check(1.5, 3.0, 1, [32, 64, 128, 256])
        assert non_increasing(rep.errors)
        assert min(rep.orders) > 0

    def test_l1_mode(self):
        rep = grunwald_convergence_check(1.5, 1.2, 1, [32, 64, 128, 256], mode="L1")
        assert non_increasing(rep.errors) and min(rep.orders) > 0

    @pytest.mark.parametrize("beta,mode", [(1.4, "sup"), (0.4, "L1")])
    def test_preconditions(self, beta, mode):
        with pytest.raises(ValueError):
            grunwald_convergence_check(1.5, beta, 1, [8, 16], mode=mode)


class TestTheta:
    @pytest.mark.parametrize("space,beta,pair", ALL_PROBES)
    def test_probe(self, space, beta, pair):
        rep = theta_probe(1.5, pair, beta, 48, space)
        assert rep.interior_residual <= 1e-10
        assert rep.lemma_residual <= 1e-10

    def test_unsupported(self):
        with pytest.raises(ValueError):
            theta_probe(1.5, "DD", "alpha", 32)
        with pytest.raises(ValueError):
            theta_values(1.5, "alpha-2", C0, 8, [0.5])
        with pytest.raises(ValueError):
            theta_values(1.5, 0.3, L1, 8, [0.5])

    def test_numeric_beta_accepted(self):
        np.testing.assert_array_equal(theta_values(1.5, 0.5, L1, 8, [0.2, 0.7]),
                                      theta_values(1.5, "alpha-1", L1, 8, [0.2, 0.7]))

    @pytest.mark.parametrize("space,beta", [(L1, "alpha"), (L1, "alpha-1"), (L1, "0"),
                                            (L1, "alpha-2"), (C0, "alpha"), (C0, "alpha-1")])
    def test_norm_convergence(self, space, beta):
        errs = [ApproxPowerFunction(1.5, beta, space, n).norm_error() for n in (16, 32, 64)]
        assert errs[-1] < errs[0] and non_increasing(errs)

    def test_reflected_on_c0(self):
        f = ApproxPowerFunction(1.5, "alpha", C0, 8).grid_function()
        h = 2.0 / 9
        # first-grid row of the table: -h^α (1 - λ) 𝒢^{-α-1}_0, seen from x = 1
        assert f.space == C0 and f.values[-1, -1] == pytest.approx(-h ** 1.5, rel=1e-14)


class TestRange:
    def test_dirichlet_constants(self):
        rep = range_identity_check(1.5, "DD", (1.0,), 16)
        expected = mittag_h(1.5, 1.5, "+", 1.0) / mittag_h(1.5, 0.5, "+", 1.0)
        assert rep.r == pytest.approx(expected, rel=1e-13) and rep.s == 0.0

    def test_closed_form_alpha_two(self):
        assert range_identity_alpha2() <= 1e-6

    def test_refinement(self, pair):
        res = [range_identity_check(1.5, pair, (1.0,), n).residual for n in (32, 64, 128, 256)]
        assert res[-1] < res[1]

    @pytest.mark.parametrize("space", [L1, C0])
    def test_refinement_rule(self, pair, space):
        assert range_refinement(1.7, pair, space).passed


class TestAdjoint:
    def test_all_pairs(self, pair):
        assert adjointness_check(1.5, pair, 32) <= 1e-10


class TestSelfConvergence:
    def test_heat_oracle_order(self):
        study = ConvergenceStudy("DD", 2.0, "forward", (32, 64, 128),
                                 oracle=sine_series_heat(smooth_initial))
        assert self_convergence(study) >= 0.9

    def test_neumann_positive_order(self):
        study = ConvergenceStudy("NN", 1.5, "forward", (16, 32, 64))
        assert self_convergence(study) > 0
        assert len(study.errors) == 2

    def test_time_zero(self):
        study = ConvergenceStudy("NN", 1.5, "forward", (16, 32, 64), t_probe=0.0)
        self_convergence(study)
        assert study.errors == [0.0, 0.0]

    def test_validation(self):
        with pytest.raises(ValueError):
            ConvergenceStudy("NN", 1.5, "forward", (32, 16, 64))
        with pytest.raises(ValueError):
            self_convergence(ConvergenceStudy("NN", 1.5, "forward", (16, 32)))


class TestReports:
    def test_json_shape(self):
        d = CheckResult("x", {"a": 1}, float("inf"), 1.0, False).to_dict()
        assert set(d) == {"check", "params", "measured", "threshold", "pass"}
        assert d["measured"] == "inf"

    def test_suite_names(self):
        with pytest.raises(KeyError):
            run_suite("nope", 1.5)

    @pytest.mark.parametrize("suite", ["grunwald", "matrix", "adjoint", "theta"])
    def test_quick_suites_pass(self, suite):
        assert all(r.passed for r in run_suite(suite, 1.4))
