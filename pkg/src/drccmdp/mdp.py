"""Finite discounted MDPs and their occupation-measure polytope.

State-action pairs are enumerated state-major: pair ``(s, a)`` has index
``offsets[s] + a``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MdpValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MdpInstance:
    """Finite MDP ``(S, A, P, q, beta)``.

    ``transition[s][a]`` is the distribution over next states when action ``a``
    is taken in state ``s``; it is stored as a dense ``(|S|, max|A|, |S|)``
    array padded with zeros for states with fewer actions.
    """

    actions_per_state: tuple
    transition: np.ndarray
    initial: np.ndarray
    discount: float

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actions_per_state)
        n_states = len(acts)
        if n_states == 0:
            raise MdpValidationError("need at least one state")
        if any(a < 1 for a in acts):
            raise MdpValidationError("every state needs at least one action")
        P = np.asarray(self.transition, dtype=float)
        if P.shape != (n_states, max(acts), n_states):
            raise MdpValidationError(
                f"transition shape {P.shape} != {(n_states, max(acts), n_states)}")
        for s, n_a in enumerate(acts):
            for a in range(n_a):
                row = P[s, a]
                if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-12:
                    raise MdpValidationError(
                        f"transition row for (s={s}, a={a}) is not a probability vector "
                        f"(sum={row.sum():.15g}, min={row.min():.3g})")
            if np.any(P[s, n_a:] != 0):
                raise MdpValidationError(f"padding entries for state {s} must be zero")
        q = np.asarray(self.initial, dtype=float).reshape(-1)
        if q.size != n_states or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise MdpValidationError("initial distribution must be a probability vector over states")
        beta = float(self.discount)
        if not 0.0 <= beta < 1.0:
            raise MdpValidationError(f"discount {beta} outside [0, 1)")
        P.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "actions_per_state", acts)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial", q)
        object.__setattr__(self, "discount", beta)

    @property
    def num_states(self) -> int:
        return len(self.actions_per_state)

    @property
    def num_pairs(self) -> int:
        return sum(self.actions_per_state)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.actions_per_state)[:-1]]).astype(int)

    def state_action_index(self) -> list[tuple[int, int]]:
        return [(s, a) for s, n_a in enumerate(self.actions_per_state) for a in range(n_a)]

    def pair_index(self, s: int, a: int) -> int:
        return int(self.offsets[s]) + a

    def to_dict(self) -> dict:
        return {
            "states": self.num_states,
            "actions": list(self.actions_per_state),
            "transition": [[self.transition[s, a].tolist() for a in range(n_a)]
                           for s, n_a in enumerate(self.actions_per_state)],
            "initial": self.initial.tolist(),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdpInstance":
        try:
            n_states = int(d["states"])
            acts = d["actions"]
            if isinstance(acts, int):
                acts = [acts] * n_states
            acts = [int(a) for a in acts]
            if len(acts) != n_states:
                raise MdpValidationError("`actions` must list one count per state")
            P = np.zeros((n_states, max(acts), n_states))
            rows = d["transition"]
            if len(rows) != n_states:
                raise MdpValidationError("`transition` must have one entry per state")
            for s, n_a in enumerate(acts):
                if len(rows[s]) != n_a:
                    raise MdpValidationError(f"`transition[{s}]` must have {n_a} rows")
                for a in range(n_a):
                    P[s, a] = rows[s][a]
            return cls(tuple(acts), P, np.asarray(d["initial"], float), float(d["discount"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MdpValidationError):
                raise
            raise MdpValidationError(f"malformed instance: {exc}") from exc


def load_instance(path) -> MdpInstance:
    """Read an MDP instance JSON file (see README for the schema)."""
    with open(Path(path)) as fh:
        return MdpInstance.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class OccupationPolytope:
    """``{tau >= 0 : eq_matrix @ tau == eq_rhs}``."""

    eq_matrix: np.ndarray
    eq_rhs: np.ndarray

    @property
    def dim(self) -> int:
        return self.eq_matrix.shape[1]

    def residual(self, tau) -> float:
        """Infinity-norm equality residual."""
        return float(np.max(np.abs(self.eq_matrix @ np.asarray(tau) - self.eq_rhs)))

    def contains(self, tau, eq_tol: float = 1e-6, neg_tol: float = 1e-9) -> bool:
        tau = np.asarray(tau, dtype=float)
        return self.residual(tau) <= eq_tol and tau.min() >= -neg_tol


def build_occupation_polytope(mdp: MdpInstance) -> OccupationPolytope:
    """Row ``s'``: ``sum_(s,a) tau(s,a) (delta(s',s) - beta p(s'|s,a)) = (1-beta) q(s')``."""
    beta = mdp.discount
    n_s = mdp.num_states
    A = np.zeros((n_s, mdp.num_pairs))
    for j, (s, a) in enumerate(mdp.state_action_index()):
        A[:, j] = -beta * mdp.transition[s, a]
        A[s, j] += 1.0
    b = (1.0 - beta) * mdp.initial
    A.setflags(write=False)
    b.setflags(write=False)
    return OccupationPolytope(A, b)


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """``probabilities[s, a]``; zero-padded beyond ``actions_per_state[s]``."""

    probabilities: np.ndarray
    actions_per_state: tuple

    def row(self, s: int) -> np.ndarray:
        return self.probabilities[s, :self.actions_per_state[s]]


def extract_policy(tau, mdp: MdpInstance) -> StationaryPolicy:
    """Row-normalize ``tau`` per state; zero-mass states get the uniform policy."""
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau.size != mdp.num_pairs:
        raise ValueError(f"tau has length {tau.size}, expected {mdp.num_pairs}")
    if np.any(tau < 0):
        raise ValueError("occupation measure has negative entries")
    probs = np.zeros((mdp.num_states, max(mdp.actions_per_state)))
    for s, (off, n_a) in enumerate(zip(mdp.offsets, mdp.actions_per_state)):
        block = tau[off:off + n_a]
        total = block.sum()
        probs[s, :n_a] = block / total if total > 0 else 1.0 / n_a
    return StationaryPolicy(probs, mdp.actions_per_state)


def clean_occupation(tau, tol: float = 1e-9) -> np.ndarray:
    """Clip solver round-off: entries in ``[-tol, 0)`` become 0."""
    tau = np.array(tau, dtype=float)
    if tau.min() < -tol:
        raise ValueError(f"occupation entry {tau.min():.3g} is below -{tol}")
    return np.clip(tau, 0.0, None)


def discounted_value(tau, reward, discount: float) -> float:
    """``tau @ reward / (1 - beta)``."""
    tau = np.asarray(tau, dtype=float).reshape(-1)
    reward = np.asarray(reward, dtype=float).reshape(-1)
    if tau.shape != reward.shape:
        raise ValueError(f"dimension mismatch: tau {tau.shape} vs reward {reward.shape}")
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward must be finite")
    return float(tau @ reward) / (1.0 - discount)


def policy_occupation(policy: StationaryPolicy, mdp: MdpInstance) -> np.ndarray:
    """Exact occupation measure of a stationary policy, by a linear solve."""
    n_s = mdp.num_states
    P_pi = np.zeros((n_s, n_s))
    for s in range(n_s):
        P_pi[s] = policy.row(s) @ mdp.transition[s, :mdp.actions_per_state[s]]
    # state occupation d solves d = (1-beta) q + beta P_pi' d
    d = np.linalg.solve(np.eye(n_s) - mdp.discount * P_pi.T, (1.0 - mdp.discount) * mdp.initial)
    return np.concatenate([d[s] * policy.row(s) for s in range(n_s)])
