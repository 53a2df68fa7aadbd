import math

import numpy as np
import pytest

from instances import TOY_D, TOY_MU, TOY_XI, toy_ball, toy_mdp, toy_specs
from drccmdp import kl
from drccmdp.distributions import GAUSSIAN, LAPLACE, EllipticalLaw, MixtureLaw, std_quantile
from drccmdp.mdp import StationaryPolicy, policy_occupation
from drccmdp.reformulate import (
    EmptyBoxError, KlConstraintSpec, NonconvexityError, ObjectiveBall, ReformulationError,
    UnsupportedObjectiveError, YBox, build_individual, build_joint_y_subproblem, chance_cone,
    joint_confidence_slack, satisfaction_probability, y_box,
)


def _tau(f0=0.4, f1=0.7):
    return policy_occupation(StationaryPolicy(np.array([[f0, 1 - f0], [f1, 1 - f1]]), (2, 2)),
                             toy_mdp())


class TestChanceCone:
    def test_cone_is_quantile_constraint(self):
        law = EllipticalLaw(TOY_MU[0], TOY_D[0])
        cone = chance_cone(0, law, TOY_XI, 0.9)
        tau = _tau()
        expected = (tau @ law.location + std_quantile(GAUSSIAN, 0.1)
                    * math.sqrt(tau @ law.dispersion @ tau) - TOY_XI)
        assert cone.slack(tau) == pytest.approx(expected)

    def test_slack_sign_matches_probability(self):
        law = EllipticalLaw(TOY_MU[0], TOY_D[0], LAPLACE)
        tau = _tau()
        p = satisfaction_probability(tau, law, TOY_XI)
        assert chance_cone(0, law, TOY_XI, p - 1e-3).slack(tau) > 0
        assert chance_cone(0, law, TOY_XI, min(p + 1e-3, 0.999)).slack(tau) < 0

    def test_level_below_half_rejected(self):
        with pytest.raises(NonconvexityError):
            chance_cone(0, EllipticalLaw(TOY_MU[0], TOY_D[0]), TOY_XI, 0.4)
        with pytest.raises(ReformulationError):
            chance_cone(0, EllipticalLaw(TOY_MU[0], TOY_D[0]), TOY_XI, 1.0)

    def test_half_level_is_mean_constraint(self):
        law = EllipticalLaw(TOY_MU[0], TOY_D[0])
        assert chance_cone(0, law, TOY_XI, 0.5).scale == 0.0


class TestIndividualProgram:
    def test_levels_are_tightened(self):
        prog = build_individual(toy_mdp(), toy_specs(0.1, confidence=0.7), toy_ball(0.1))
        assert prog.meta["levels"] == pytest.approx([kl.adjust_confidence(0.7, 0.1)] * 2)
        assert prog.meta["radii"] == [0.1, 0.1]

    def test_nonconvex_confidence(self):
        with pytest.raises(NonconvexityError):
            build_individual(toy_mdp(), toy_specs(0.0, confidence=0.3), toy_ball())

    def test_objective_norm_term(self):
        prog = build_individual(toy_mdp(), toy_specs(0.2), toy_ball(0.2))
        tau = _tau()
        expected = -tau @ toy_ball().reference.location + math.sqrt(
            2 * 0.2 * tau @ toy_ball().reference.dispersion @ tau)
        assert prog.objective_value(tau) == pytest.approx(expected)

    def test_laplace_objective_needs_alpha_path(self):
        ball = ObjectiveBall(EllipticalLaw(toy_ball().reference.location,
                                           toy_ball().reference.dispersion, LAPLACE), 0.1)
        with pytest.raises(UnsupportedObjectiveError):
            build_individual(toy_mdp(), toy_specs(), ball)

    def test_spec_validation(self):
        with pytest.raises(ReformulationError):
            KlConstraintSpec(EllipticalLaw(TOY_MU[0], TOY_D[0]), math.nan)
        with pytest.raises(ReformulationError):
            KlConstraintSpec(EllipticalLaw(TOY_MU[0], TOY_D[0]), 0.0, 1.5)
        with pytest.raises(ReformulationError):
            ObjectiveBall(EllipticalLaw(TOY_MU[0], TOY_D[0]), -1.0)


class TestSatisfactionProbability:
    def test_vs_monte_carlo(self):
        rng = np.random.default_rng(0)
        tau = _tau()
        law = EllipticalLaw(TOY_MU[1], TOY_D[1])
        r = law.location + rng.standard_normal((400_000, 4)) * np.sqrt(TOY_D[1])
        emp = np.mean(r @ tau >= TOY_XI)
        assert abs(satisfaction_probability(tau, law, TOY_XI) - emp) < 4 * math.sqrt(
            emp * (1 - emp) / 4e5)

    def test_mixture_is_weighted(self):
        tau = _tau()
        a, b = EllipticalLaw(TOY_MU[0], TOY_D[0]), EllipticalLaw(TOY_MU[1], TOY_D[1])
        mix = MixtureLaw(np.array([0.25, 0.75]), (a, b))
        assert satisfaction_probability(tau, mix, TOY_XI) == pytest.approx(
            0.25 * satisfaction_probability(tau, a, TOY_XI)
            + 0.75 * satisfaction_probability(tau, b, TOY_XI))


class TestConfidenceBox:
    @pytest.mark.parametrize("delta", [0.0, 0.01, 0.2])
    def test_box_contains_only_supported_y(self, delta):
        specs = toy_specs(delta)
        tau = _tau(0.9, 0.9)
        box = y_box(tau, specs)
        for k, s in enumerate(specs):
            p = satisfaction_probability(tau, s.reference, s.threshold)
            lo, hi = box.lower[k], box.upper[k]
            assert kl.adjust_confidence(lo, delta) == pytest.approx(0.5, abs=1e-8) or lo == 0.0
            assert kl.adjust_confidence(hi, delta) <= p + 1e-8
            inside = np.linspace(lo, hi, 7)
            assert all(0.5 - 1e-8 <= kl.adjust_confidence(v, delta) <= p + 1e-8 for v in inside)

    def test_coarse_box_is_conservative(self):
        specs = toy_specs(0.05)
        tau = _tau(0.9, 0.9)
        fine, coarse = y_box(tau, specs), y_box(tau, specs, ytol=1e-2)
        assert np.all(coarse.lower >= fine.lower - 1e-12)
        assert np.all(coarse.upper <= fine.upper + 1e-12)

    def test_current_point_is_kept(self):
        specs = toy_specs(0.05)
        tau = _tau(0.9, 0.9)
        fine = y_box(tau, specs)
        cur = fine.upper - 1e-5
        coarse = y_box(tau, specs, ytol=1e-2, current=cur)
        assert np.all(coarse.upper >= cur)

    def test_empty_box(self):
        # a policy that fails the first constraint at the median
        specs = toy_specs(0.0, threshold=-0.9)
        with pytest.raises(EmptyBoxError) as exc:
            y_box(_tau(0.0, 0.0), specs)
        assert exc.value.k == 0


class TestYSubproblem:
    def _grid_oracle(self, g, lo, hi, eps_hat, form):
        Y = np.stack(np.meshgrid(*(np.linspace(a, b, 2001) for a, b in zip(lo, hi))), -1)
        Y = Y.reshape(-1, len(lo))
        ok = (np.sum(np.log(Y), axis=1) >= math.log(eps_hat) if form == "product"
              else Y.sum(axis=1) >= eps_hat)
        return float(np.min(Y[ok] @ g))

    @pytest.mark.parametrize("form", ["product", "sum"])
    @pytest.mark.parametrize("g", [(1.0, 2.0), (3.0, 0.5), (0.0, 1.0)])
    def test_vs_grid(self, form, g):
        g = np.array(g)
        if form == "product":
            lo, hi, eps = np.array([0.6, 0.7]), np.array([0.99, 0.97]), 0.8
        else:
            lo, hi, eps = np.array([0.1, 0.2]), np.array([0.5, 0.6]), 0.9
        sub = build_joint_y_subproblem(None, [None, None], g, YBox(lo, hi), eps, form)
        y = sub.solve()
        assert sub.feasible(y)
        best = self._grid_oracle(g, lo, hi, eps, form)
        assert g @ y <= best + 1e-6

    def test_zero_direction_keeps_point(self):
        lo, hi = np.array([0.6, 0.7]), np.array([0.99, 0.97])
        sub = build_joint_y_subproblem(None, [None, None], np.zeros(2), YBox(lo, hi), 0.8)
        np.testing.assert_array_equal(sub.solve(keep=[0.9, 0.95]), [0.9, 0.95])

    def test_unattainable(self):
        lo, hi = np.array([0.6, 0.7]), np.array([0.8, 0.8])
        sub = build_joint_y_subproblem(None, [None, None], np.ones(2), YBox(lo, hi), 0.8)
        with pytest.raises(EmptyBoxError):
            sub.solve()

    def test_validation(self):
        box = YBox(np.array([0.6]), np.array([0.9]))
        with pytest.raises(ReformulationError):
            build_joint_y_subproblem(None, [None], np.ones(1), box, 0.0)
        with pytest.raises(ReformulationError):
            build_joint_y_subproblem(None, [None, None], np.ones(2), box, 0.8)
