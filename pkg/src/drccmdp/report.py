"""Solve reports and their JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import StationaryPolicy

# statuses beyond the backend ones
CONVERGED = "converged"
MAX_ITERATIONS = "max-iterations"
INFEASIBLE_START = "infeasible-start"
EMPTY_BOX = "empty-box"

REPORT_FORMAT = "drccmdp-report/1"


def jsonable(v):
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``objective`` is the minimized value (for Gaussian objectives
    ``-tau@mu0 + sqrt(2 delta0) ||Sigma0^{1/2} tau||``, i.e. minus the
    worst-case expected per-step reward). For the joint heuristic it is an upper
    bound on the true optimum. ``info`` keys starting with ``_`` hold in-memory
    diagnostics and are left out of the JSON form.
    """

    mode: str
    status: str
    tau: np.ndarray | None = None
    objective: float = math.nan
    policy: StationaryPolicy | None = None
    duals: dict = field(default_factory=dict)
    y_trace: list = field(default_factory=list)
    theta_trace: list = field(default_factory=list)
    value_trace: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    heuristic: str | None = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.tau is not None and self.status in ("optimal", CONVERGED, MAX_ITERATIONS)

    @property
    def y(self) -> np.ndarray | None:
        return np.asarray(self.y_trace[-1]) if self.y_trace else None

    def to_dict(self) -> dict:
        pol = None
        if self.policy is not None:
            pol = [self.policy.row(s).tolist() for s in range(len(self.policy.actions_per_state))]
        return jsonable({
            "format": REPORT_FORMAT,
            "mode": self.mode,
            "status": self.status,
            "objective": self.objective,
            "tau": self.tau,
            "policy": pol,
            "duals": {k: v for k, v in self.duals.items() if not k.endswith("#cone")},
            "iterations": self.iterations,
            "trace": {"y": self.y_trace, "theta": self.theta_trace, "value": self.value_trace},
            "wall_time": self.wall_time,
            "heuristic": self.heuristic,
            "info": {k: v for k, v in self.info.items() if not k.startswith("_")},
        })

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
