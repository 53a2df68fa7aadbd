import json
import math

import numpy as np
import pytest

from instances import TOY_D, TOY_D0, TOY_MU, TOY_MU0, TOY_XI, toy_mdp
from drccmdp import kl
from drccmdp.distributions import AssumptionError, EllipticalLaw, GeneralizedStable, MixtureLaw
from drccmdp.mdp import StationaryPolicy, policy_occupation
from drccmdp.mixture import MixtureConfig, build_mixture_program, solve_mixture_heuristic
from drccmdp.reformulate import KlConstraintSpec, ObjectiveBall, ReformulationError


def _mixture(mu, d, shift, w=(0.6, 0.4)):
    comps = (EllipticalLaw(mu, d), EllipticalLaw(np.asarray(mu) + shift, 1.5 * np.asarray(d)))
    return MixtureLaw(np.array(w), comps)


def _specs(radius=0.05, threshold=TOY_XI):
    return [KlConstraintSpec(_mixture(m, d, 0.3), threshold, 0.5, radius)
            for m, d in zip(TOY_MU, TOY_D)]


def _ball(radius=0.05):
    return ObjectiveBall(_mixture(TOY_MU0, TOY_D0, -0.5), radius)


def _tau():
    return policy_occupation(StationaryPolicy(np.array([[0.3, 0.7], [0.6, 0.4]]), (2, 2)), toy_mdp())


class TestAssumptions:
    def test_positive_objective_mean(self):
        ball = ObjectiveBall(EllipticalLaw(TOY_MU0 + 5.0, TOY_D0), 0.1)
        with pytest.raises(AssumptionError, match="mu0_j <= 0"):
            build_mixture_program(toy_mdp(), _specs(), ball)

    def test_singular_dispersion(self):
        d = np.array(TOY_D0, float)
        d[0] = 0.0
        with pytest.raises(AssumptionError, match="positive definite"):
            build_mixture_program(toy_mdp(), _specs(), ObjectiveBall(EllipticalLaw(TOY_MU0, d), 0.1))

    def test_generalized_stable_objective(self):
        law = EllipticalLaw(TOY_MU0, TOY_D0, GeneralizedStable(1.0, 1.0))
        with pytest.raises(AssumptionError, match="cannot be established"):
            build_mixture_program(toy_mdp(), _specs(), ObjectiveBall(law, 0.1))

    def test_generalized_stable_constraint(self):
        bad = KlConstraintSpec(EllipticalLaw(TOY_MU[0], TOY_D[0], GeneralizedStable(1.0, 1.0)),
                               TOY_XI, 0.5, 0.1)
        with pytest.raises(ReformulationError, match="no tractable CDF"):
            build_mixture_program(toy_mdp(), [bad, _specs()[1]], _ball())

    def test_joint_confidence_range(self):
        with pytest.raises(ReformulationError):
            build_mixture_program(toy_mdp(), _specs(), _ball(), eps_hat=0.0)
        with pytest.raises(ValueError):
            build_mixture_program(toy_mdp(), _specs(), _ball(), form="max")


class TestEvaluators:
    def test_component_probabilities_vs_monte_carlo(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball())
        tau = _tau()
        rng = np.random.default_rng(11)
        n = 400_000
        for k, probs in enumerate(desc.component_probabilities(tau)):
            for j, c in enumerate(desc.constraints[k].components):
                r = c.location + rng.standard_normal((n, 4)) * np.sqrt(np.diag(c.dispersion))
                emp = np.mean(r @ tau >= TOY_XI)
                assert abs(probs[j] - emp) < 4 * math.sqrt(max(emp * (1 - emp), 1e-6) / n)

    def test_infinite_alpha_is_mean(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball(0.0))
        tau = _tau()
        assert desc.objective_value(tau, math.inf) == pytest.approx(-tau @ desc.mean_objective())
        alpha, v = desc.best_alpha(tau)
        assert math.isinf(alpha) and v == pytest.approx(-tau @ desc.mean_objective())

    def test_best_alpha_is_minimum(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball(0.2))
        tau = _tau()
        alpha, v = desc.best_alpha(tau)
        for a in (alpha * 0.8, alpha * 1.25, 1e-2, 1e2):
            assert desc.objective_value(tau, a) >= v - 1e-10
        # a positive radius makes the worst case strictly worse than the mean
        assert v > -tau @ desc.mean_objective()


class TestHeuristic:
    def test_two_component_toy_converges_and_verifies(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball(), eps_hat=0.8)
        rep = solve_mixture_heuristic(desc, MixtureConfig(y0=(0.9, 0.9)))
        assert rep.ok and rep.info["verified"]
        assert max(rep.info["residuals"].values()) <= 1e-6
        assert np.prod(rep.y) >= 0.8 - 1e-9
        # every constraint's mixture probability covers its tightened level
        for k, probs in enumerate(desc.component_probabilities(rep.tau)):
            mix_p = float(desc.constraints[k].weights @ probs)
            assert mix_p >= kl.adjust_confidence(rep.y[k], desc.radii[k]) - 1e-6
        assert rep.heuristic == "stationary-point only"

    def test_objective_matches_evaluator(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball(), eps_hat=0.8)
        rep = solve_mixture_heuristic(desc)
        assert rep.objective == pytest.approx(desc.objective_value(rep.tau, rep.info["alpha"]))

    def test_sum_form(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball(), eps_hat=0.9, form="sum")
        rep = solve_mixture_heuristic(desc, MixtureConfig(y0=(0.6, 0.6)))
        assert rep.ok and rep.info["verified"]
        assert sum(rep.y) >= 0.9 - 1e-9

    def test_infeasible_threshold(self):
        desc = build_mixture_program(toy_mdp(), _specs(threshold=10.0), _ball())
        rep = solve_mixture_heuristic(desc)
        assert rep.status == "infeasible" and not rep.ok

    def test_report_json_hides_private_keys(self):
        desc = build_mixture_program(toy_mdp(), _specs(), _ball())
        d = json.loads(solve_mixture_heuristic(desc).to_json())
        assert "_point" not in d["info"] and "residuals" in d["info"]
