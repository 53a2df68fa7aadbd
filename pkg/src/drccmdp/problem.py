"""Problem container and problem files.

A problem file is an MDP instance document (``states``, ``actions``,
``transition``, ``initial``, ``discount``) extended with reward laws::

    "objective":   <law>,
    "objective_radius": 0.0,
    "constraints": [{"reference": <law>, "threshold": -40, "confidence": 0.8, "radius": 0.0}, ...]

where ``<law>`` is ``{"location": [...], "dispersion": {"diag": [...]} | {"matrix": [[...]]},
"generator": "gaussian" | "laplace" | {"name": "generalized-stable", ...}}`` or a
mixture ``{"weights": [...], "components": [<law>, ...]}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from .distributions import EllipticalLaw, MixtureLaw
from .mdp import MdpInstance, MdpValidationError
from .reformulate import KlConstraintSpec, ObjectiveBall


@dataclass(frozen=True, eq=False)
class Problem:
    mdp: MdpInstance
    specs: tuple
    objective: ObjectiveBall
    name: str = "instance"

    def with_radius(self, radius: float) -> "Problem":
        return replace(self, specs=tuple(s.with_radius(radius) for s in self.specs),
                       objective=self.objective.with_radius(radius))

    def with_threshold(self, threshold: float) -> "Problem":
        return replace(self, specs=tuple(KlConstraintSpec(s.reference, threshold, s.confidence, s.radius)
                                         for s in self.specs))

    def with_confidence(self, confidence: float) -> "Problem":
        return replace(self, specs=tuple(s.with_confidence(confidence) for s in self.specs))


def law_from_dict(d: dict):
    return MixtureLaw.from_dict(d) if "weights" in d else EllipticalLaw.from_dict(d)


def law_to_dict(law) -> dict:
    return law.to_dict()


def problem_from_dict(d: dict, name: str = "instance") -> Problem:
    mdp = MdpInstance.from_dict(d)
    try:
        objective = law_from_dict(d["objective"])
        specs = tuple(KlConstraintSpec(law_from_dict(c["reference"]), float(c["threshold"]),
                                       float(c.get("confidence", 0.8)), float(c.get("radius", 0.0)))
                      for c in d["constraints"])
        radius0 = float(d.get("objective_radius", 0.0))
    except (KeyError, TypeError) as exc:
        raise MdpValidationError(f"problem file needs `objective` and `constraints`: {exc}") from exc
    return Problem(mdp, specs, ObjectiveBall(objective, radius0), name)


def problem_to_dict(problem: Problem) -> dict:
    d = problem.mdp.to_dict()
    d["objective"] = law_to_dict(problem.objective.reference)
    d["objective_radius"] = problem.objective.radius
    d["constraints"] = [{"reference": law_to_dict(s.reference), "threshold": s.threshold,
                         "confidence": s.confidence, "radius": s.radius} for s in problem.specs]
    return d


def load_problem(path) -> Problem:
    path = Path(path)
    with open(path) as fh:
        return problem_from_dict(json.load(fh), name=path.stem)
