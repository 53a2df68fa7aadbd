"""Radius sweeps: one solve per radius, a CSV of action-0 probabilities and a JSON manifest."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .mixture import MixtureConfig, build_mixture_program, solve_mixture_heuristic
from .problem import Problem
from .report import SolveReport, jsonable
from .solve import Algorithm1Config, algorithm1, solve_individual

log = logging.getLogger(__name__)

MODES = ("individual", "joint", "mixture")
CSV_NAME = "repair_probabilities.csv"
MANIFEST_NAME = "manifest.json"
CSV_COLUMNS = ("radius", "state", "repair_prob", "status")
# statuses for solves that raised instead of returning a report
BAD_INPUT = "bad-input"
ERROR = "error"


@dataclass(frozen=True)
class RunConfig:
    """Solver settings shared by every sweep point."""

    backend: str = "cvxopt"
    workers: int = 1
    joint: Algorithm1Config = field(default_factory=Algorithm1Config)
    mixture: MixtureConfig = field(default_factory=MixtureConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        joint = Algorithm1Config.from_dict(d["joint"]) if "joint" in d else Algorithm1Config()
        mix = d.get("mixture", {})
        mixture = MixtureConfig(**{k: tuple(v) if k == "y0" else v for k, v in mix.items()})
        return cls(d.get("backend", "cvxopt"), int(d.get("workers", 1)), joint, mixture)

    def to_dict(self) -> dict:
        m = self.mixture
        return {"backend": self.backend, "workers": self.workers, "joint": self.joint.to_dict(),
                "mixture": {"y0": list(m.y0), "max_iter": m.max_iter, "tol": m.tol,
                            "step": m.step, "line_search_tol": m.line_search_tol,
                            "phase1_steps": m.phase1_steps, "verify_tol": m.verify_tol}}


def solve_problem(problem: Problem, mode: str, config: RunConfig | None = None) -> SolveReport:
    cfg = config or RunConfig()
    if mode == "individual":
        return solve_individual(problem.mdp, problem.specs, problem.objective, cfg.backend)
    if mode == "joint":
        return algorithm1(problem.mdp, problem.specs, problem.objective, cfg.joint, cfg.backend)
    if mode == "mixture":
        desc = build_mixture_program(problem.mdp, problem.specs, problem.objective,
                                     cfg.joint.eps_hat, cfg.joint.form)
        return solve_mixture_heuristic(desc, cfg.mixture, cfg.backend)
    raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


@dataclass
class SweepResult:
    rows: list
    reports: dict
    manifest: dict


def run_sweep(problem: Problem, mode: str, radii, out_dir=None, config: RunConfig | None = None,
              caveat: str | None = None) -> SweepResult:
    """Solve at every radius (all KL radii equal) and write ``CSV_NAME`` and ``MANIFEST_NAME``.

    A failed solve is recorded with its status and the sweep continues.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    cfg = config or RunConfig()
    radii = [float(r) for r in radii]
    if not radii or any(r < 0 for r in radii):
        raise ValueError("radii must be a nonempty list of nonnegative numbers")
    started = time.perf_counter()

    def one(radius):
        try:
            return radius, solve_problem(problem.with_radius(radius), mode, cfg)
        except Exception as exc:  # recorded per row; the sweep goes on
            log.exception("solve at radius %g failed", radius)
            status = BAD_INPUT if isinstance(exc, ValueError) else ERROR
            return radius, SolveReport(mode, status, info={"error": f"{type(exc).__name__}: {exc}"})

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        results = dict(pool.map(one, radii))

    n_states = problem.mdp.num_states
    rows = []
    for radius in sorted(set(radii), reverse=True):
        rep = results[radius]
        for s in range(n_states):
            prob = float(rep.policy.row(s)[0]) if rep.policy is not None else float("nan")
            rows.append((radius, s + 1, prob, rep.status))

    manifest = {
        "mode": mode,
        "problem": problem.name,
        "radii": sorted(set(radii), reverse=True),
        "states": list(range(1, n_states + 1)),
        "columns": list(CSV_COLUMNS),
        "config": cfg.to_dict(),
        "thresholds": [s.threshold for s in problem.specs],
        "confidences": [s.confidence for s in problem.specs],
        "points": [{"radius": r, "status": results[r].status, "objective": results[r].objective,
                    "iterations": results[r].iterations, "wall_time": results[r].wall_time,
                    "heuristic": results[r].heuristic,
                    "y": results[r].y.tolist() if results[r].y is not None else None,
                    "error": results[r].info.get("error") or results[r].info.get("diagnostic")}
                   for r in sorted(set(radii), reverse=True)],
        "caveat": caveat,
        "created": datetime.now(timezone.utc).isoformat(),
        "total_time": time.perf_counter() - started,
    }
    manifest = jsonable(manifest)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / CSV_NAME, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for radius, s, prob, status in rows:
                w.writerow([repr(radius), s, f"{prob:.10f}", status])
        with open(out / MANIFEST_NAME, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        rdir = out / "reports"
        rdir.mkdir(exist_ok=True)
        for r, rep in results.items():
            with open(rdir / f"radius_{r!r}.json", "w") as fh:
                fh.write(rep.to_json(indent=2, sort_keys=True))
    return SweepResult(rows, results, manifest)
