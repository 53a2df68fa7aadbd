import json

import numpy as np
import pytest

import oracles
from instances import TOY_BETA, TOY_P, TOY_Q, toy_mdp
from drccmdp.benchmark import MEAN_R0, build_benchmark, default_kernel
from drccmdp.mdp import (
    MdpInstance, MdpValidationError, StationaryPolicy, build_occupation_polytope,
    clean_occupation, discounted_value, extract_policy, load_instance, policy_occupation,
)
from drccmdp.reformulate import build_constraint_program
from drccmdp.solvers import get_backend


def _random_policy(rng, mdp):
    probs = np.zeros((mdp.num_states, max(mdp.actions_per_state)))
    for s, n_a in enumerate(mdp.actions_per_state):
        probs[s, :n_a] = rng.dirichlet(np.ones(n_a))
    return StationaryPolicy(probs, mdp.actions_per_state)


class TestValidation:
    def test_rows_must_be_distributions(self):
        P = TOY_P.copy()
        P[0, 1] = [0.5, 0.6]
        with pytest.raises(MdpValidationError, match="probability vector"):
            MdpInstance((2, 2), P, TOY_Q, TOY_BETA)

    def test_discount_range(self):
        with pytest.raises(MdpValidationError):
            MdpInstance((2, 2), TOY_P, TOY_Q, 1.0)

    def test_initial_distribution(self):
        with pytest.raises(MdpValidationError):
            MdpInstance((2, 2), TOY_P, np.array([0.7, 0.7]), TOY_BETA)

    def test_shape(self):
        with pytest.raises(MdpValidationError, match="shape"):
            MdpInstance((2, 2, 2), TOY_P, TOY_Q, TOY_BETA)

    def test_padding_must_be_zero(self):
        P = np.zeros((2, 2, 2))
        P[0, 0] = [1, 0]
        P[1, 0] = [0, 1]
        P[0, 1] = [0.5, 0.5]
        with pytest.raises(MdpValidationError, match="padding"):
            MdpInstance((1, 2), P, TOY_Q, TOY_BETA)

    def test_json_roundtrip(self, tmp_path):
        mdp = toy_mdp()
        path = tmp_path / "mdp.json"
        path.write_text(json.dumps(mdp.to_dict()))
        back = load_instance(path)
        assert back.actions_per_state == mdp.actions_per_state
        np.testing.assert_array_equal(back.transition, mdp.transition)
        assert back.discount == mdp.discount

    def test_malformed_json(self):
        with pytest.raises(MdpValidationError):
            MdpInstance.from_dict({"states": 2, "actions": [2, 2]})


class TestOccupation:
    def test_variable_action_counts(self):
        P = np.zeros((3, 3, 3))
        P[0, :3] = [[0, 1, 0], [0, 0, 1], [1, 0, 0]]
        P[1, 0] = [1, 0, 0]
        P[2, :2] = [[0.5, 0.5, 0], [0, 0, 1]]
        mdp = MdpInstance((3, 1, 2), P, np.array([1.0, 0, 0]), 0.7)
        assert mdp.num_pairs == 6
        assert mdp.pair_index(2, 1) == 5
        pol = _random_policy(np.random.default_rng(0), mdp)
        tau = policy_occupation(pol, mdp)
        poly = build_occupation_polytope(mdp)
        assert poly.contains(tau, eq_tol=1e-12)
        assert abs(tau.sum() - 1) < 1e-12

    def test_policy_occupation_vs_direct_solve(self):
        rng = np.random.default_rng(1)
        mdp = build_benchmark().mdp
        for _ in range(5):
            pol = _random_policy(rng, mdp)
            tau = policy_occupation(pol, mdp)
            ref = oracles.occupation_of_policy(mdp.transition, mdp.initial, mdp.discount,
                                               pol.probabilities)
            np.testing.assert_allclose(tau, ref, atol=1e-13)

    def test_policy_occupation_vs_simulation(self):
        rng = np.random.default_rng(2)
        mdp = toy_mdp()
        pol = _random_policy(rng, mdp)
        tau = policy_occupation(pol, mdp)
        emp = oracles.simulate_occupation(TOY_P, TOY_Q, TOY_BETA, pol.probabilities,
                                          horizon=80, episodes=200_000, rng=rng)
        np.testing.assert_allclose(emp, tau, atol=5e-3)

    def test_extract_policy_roundtrip(self):
        rng = np.random.default_rng(3)
        mdp = build_benchmark().mdp
        pol = _random_policy(rng, mdp)
        back = extract_policy(policy_occupation(pol, mdp), mdp)
        np.testing.assert_allclose(back.probabilities, pol.probabilities, atol=1e-12)

    def test_unvisited_state_gets_uniform_policy(self):
        P = np.zeros((2, 2, 2))
        P[:, :, 0] = 1.0
        mdp = MdpInstance((2, 2), P, np.array([1.0, 0.0]), 0.5)
        pol = extract_policy(np.array([0.3, 0.7, 0.0, 0.0]), mdp)
        np.testing.assert_allclose(pol.row(1), [0.5, 0.5])

    def test_clean_occupation(self):
        np.testing.assert_array_equal(clean_occupation([1.0, -1e-12]), [1.0, 0.0])
        with pytest.raises(ValueError):
            clean_occupation([1.0, -1e-3])

    def test_discounted_value_vs_simulation(self):
        rng = np.random.default_rng(4)
        mdp = toy_mdp()
        pol = _random_policy(rng, mdp)
        reward = np.array([1.0, -2.0, 0.5, 3.0])
        v = discounted_value(policy_occupation(pol, mdp), reward, TOY_BETA)
        mc, se = oracles.simulate_discounted_reward(TOY_P, TOY_Q, TOY_BETA, pol.probabilities,
                                                    reward, 80, 200_000, rng)
        assert abs(v - mc) < 4 * se

    def test_discounted_value_shape_check(self):
        with pytest.raises(ValueError):
            discounted_value(np.ones(4), np.ones(3), 0.5)


class TestLinearProgramVertices:
    @pytest.mark.parametrize("make", [toy_mdp, lambda: build_benchmark().mdp])
    def test_lp_optimum_is_best_deterministic_policy(self, make):
        mdp = make()
        rng = np.random.default_rng(5)
        reward = MEAN_R0.reshape(-1) if mdp.num_states == 10 else rng.normal(size=4)
        prog = build_constraint_program(mdp, [], [], objective=-reward)
        res = get_backend().solve(prog)
        verts = oracles.deterministic_occupations(mdp.transition, mdp.initial, mdp.discount)
        best = float(np.max(verts @ reward))
        assert res.status == "optimal"
        assert abs(-res.objective - best) < 1e-7

    def test_default_kernel_is_stochastic(self):
        P = default_kernel()
        np.testing.assert_allclose(P.sum(axis=2), 1.0)
        assert P[9, 1, 9] == 1.0
