"""Machine-replacement benchmark: 10 machine states, repair / do-not-repair.

Pairs are state-major: index ``2 s`` is repair in state ``s + 1`` and
``2 s + 1`` is do-not-repair. Rewards are costs, hence nonpositive means.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .distributions import EllipticalLaw
from .mdp import MdpInstance, MdpValidationError
from .problem import Problem
from .reformulate import KlConstraintSpec, ObjectiveBall

NUM_STATES = 10
REPAIR, KEEP = 0, 1
DISCOUNT = 0.9
THRESHOLD = -40.0
CONFIDENCE = 0.8

# (repair, do-not-repair) mean costs per state
MEAN_R0 = np.array([[-10, 0]] * 8 + [[-40, -85], [-40, -95]], dtype=float)
MEAN_R1 = np.array([[-15, -10], [-15, -30], [-15, -40], [-15, -50], [-15, -70],
                    [-15, -80], [-15, -80], [-15, -80], [-50, -200], [-50, -200]], dtype=float)
MEAN_R2 = np.array([[0, -40], [0, -40], [0, -50], [0, -50], [-15, -50],
                    [-15, -55], [-15, -55], [-15, -55], [-30, -80], [-30, -100]], dtype=float)

DIAG_R0 = np.array([0.3] * 15 + [3, 5, 2, 8, 9], dtype=float)
DIAG_R1 = np.array([0.5, 5, 0.5, 0.5, 0.5, 5, 0.5, 5, 0.5, 0.5,
                    0.5, 5, 0.5, 0.5, 0.5, 0.5, 8, 9, 8, 9], dtype=float)
DIAG_R2 = np.array([0.04] * 15 + [4, 9, 8, 8.5, 10], dtype=float)

INDIVIDUAL_RADII = (0.5, 0.4, 0.3, 0.2, 0.1, 0.01)
JOINT_RADII = (1e-4, 5e-5, 1e-5, 5e-6, 1e-6, 0.0)

KERNEL_CAVEAT = (
    "Transition kernel is the documented default (repair -> state 1; do-not-repair "
    "advances one state w.p. 0.9, stays w.p. 0.1; state 10 absorbing) unless a kernel "
    "file was supplied. Quantitative results depend on this choice.")


def default_kernel(num_states: int = NUM_STATES, advance: float = 0.9) -> np.ndarray:
    P = np.zeros((num_states, 2, num_states))
    for s in range(num_states):
        P[s, REPAIR, 0] = 1.0
        if s < num_states - 1:
            P[s, KEEP, s + 1] = advance
            P[s, KEEP, s] = 1.0 - advance
        else:
            P[s, KEEP, s] = 1.0
    return P


def load_kernel(path) -> np.ndarray:
    """Kernel file: JSON ``{"transition": [[row_repair, row_keep], ...]}`` or the bare nested list."""
    with open(Path(path)) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["transition"]
    P = np.asarray(data, dtype=float)
    if P.shape != (NUM_STATES, 2, NUM_STATES):
        raise MdpValidationError(f"kernel shape {P.shape} != {(NUM_STATES, 2, NUM_STATES)}")
    return P


def build_benchmark(kernel=None, radius: float = 0.0, threshold: float = THRESHOLD,
                    confidence: float = CONFIDENCE) -> Problem:
    """Benchmark instance with every KL radius set to ``radius``."""
    P = default_kernel() if kernel is None else np.asarray(kernel, dtype=float)
    mdp = MdpInstance((2,) * NUM_STATES, P, np.full(NUM_STATES, 1.0 / NUM_STATES), DISCOUNT)
    r0 = EllipticalLaw(MEAN_R0.reshape(-1), DIAG_R0)
    specs = tuple(KlConstraintSpec(EllipticalLaw(m.reshape(-1), d), threshold, confidence, radius)
                  for m, d in ((MEAN_R1, DIAG_R1), (MEAN_R2, DIAG_R2)))
    return Problem(mdp, specs, ObjectiveBall(r0, radius), name="machine-replacement")


def repair_probabilities(policy) -> np.ndarray:
    return np.array([policy.row(s)[REPAIR] for s in range(NUM_STATES)])
