"""Solve drivers: individual programs and the alternating joint scheme."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import kl
from .conic import SocConstraint, _replace
from .distributions import (
    ALPHA_GRID, Gaussian, UnsupportedGeneratorError, std_quantile_derivative,
)
from .linesearch import golden_section
from .mdp import MdpInstance, clean_occupation, extract_policy
from .objectives import KlDualObjective, laplace_domain_rows
from .reformulate import (
    EmptyBoxError, NonconvexityError, ObjectiveBall, ReformulationError,
    build_constraint_program, build_individual, build_joint_tau_subproblem,
    build_joint_y_subproblem, check_objective_ball, joint_confidence_slack, y_box,
)
from .report import (
    CONVERGED, EMPTY_BOX, INFEASIBLE_START, MAX_ITERATIONS, SolveReport,
)
from .solvers import INFEASIBLE, NUMERICAL, OPTIMAL, ConicResult, get_backend, multipliers

log = logging.getLogger(__name__)


LEVEL_CAP = 1.0 - 1e-12


class UnsupportedCombinationError(ReformulationError):
    pass


def _direction(specs) -> list[str]:
    return ["increasing" if kl.is_increasing(s.radius) else "decreasing" for s in specs]


def _tau_report(mode, res: ConicResult, mdp, t0, **info) -> SolveReport:
    if res.x is None or res.status != OPTIMAL:
        return SolveReport(mode, res.status, wall_time=time.perf_counter() - t0, info=info)
    tau = clean_occupation(res.x, tol=1e-7)
    return SolveReport(mode, res.status, tau, res.objective, extract_policy(tau, mdp), res.duals,
                       wall_time=time.perf_counter() - t0, info=info)


def solve_individual(mdp: MdpInstance, specs, objective_ball: ObjectiveBall,
                     backend=None) -> SolveReport:
    """Individual KL-robust program; non-Gaussian objectives take the alpha-search path."""
    try:
        law = check_objective_ball(objective_ball, mdp.num_pairs)
    except UnsupportedGeneratorError as exc:
        raise UnsupportedCombinationError(str(exc)) from exc
    if not isinstance(law.generator, Gaussian):
        return solve_individual_nongaussian(mdp, specs, objective_ball, backend)
    t0 = time.perf_counter()
    prog = build_individual(mdp, specs, objective_ball)
    res = get_backend(backend).solve(prog)
    return _tau_report("individual", res, mdp, t0, levels=prog.meta["levels"],
                       chi_direction=_direction(specs), backend=res.backend)


def _with_cones(prog, rows, prefix):
    extra = tuple(SocConstraint(f"{prefix}[{i}]", lin, off, 1.0, M, np.zeros(M.shape[0]))
                  for i, (lin, off, M) in enumerate(rows))
    return _replace(prog, cones=prog.cones + extra)


def solve_individual_nongaussian(mdp: MdpInstance, specs, objective_ball: ObjectiveBall,
                                 backend=None, alpha_grid=ALPHA_GRID,
                                 alpha_tol: float = 1e-10) -> SolveReport:
    """Outer search over alpha with an inner convex solve in tau at fixed alpha.

    The inner objective ``-tau@mu0 + alpha log psi0(-tau'S0 tau / 2 alpha^2) + alpha delta0``
    is convex for Gaussian and Laplace generators; other generators are rejected.
    """
    t0 = time.perf_counter()
    n = mdp.num_pairs
    try:
        law = check_objective_ball(objective_ball, n)
    except UnsupportedGeneratorError as exc:
        raise UnsupportedCombinationError(str(exc)) from exc
    delta = objective_ball.radius
    levels = [kl.adjust_confidence(s.confidence, s.radius) for s in specs]
    base = build_constraint_program(mdp, specs, levels)
    be = get_backend("cvxopt") if backend is None else get_backend(backend)
    info = {"levels": levels, "chi_direction": _direction(specs)}
    heuristic = None if isinstance(law.generator, Gaussian) else "alpha-search"

    if delta == 0.0:
        res = be.solve(_replace(base, objective=-law.location))
        rep = _tau_report("individual", res, mdp, t0, alpha=math.inf, **info)
        rep.heuristic = heuristic
        return rep

    feas = be.solve(base)
    if feas.status != OPTIMAL:
        return SolveReport("individual", feas.status, wall_time=time.perf_counter() - t0, info=info)
    try:
        objective = KlDualObjective(((1.0, law),), delta)
    except UnsupportedGeneratorError as exc:
        raise UnsupportedCombinationError(str(exc)) from exc

    # smallest alpha for which the Laplace domain meets the feasible region
    alpha_min = 0.0
    rows = laplace_domain_rows(objective.components, 1.0, n)
    if rows:
        R = rows[0][2]
        from .conic import NormTerm
        res = be.solve(_replace(base, norm_terms=(NormTerm(1.0, R, np.zeros(R.shape[0])),)))
        if res.status != OPTIMAL:
            return SolveReport("individual", res.status, wall_time=time.perf_counter() - t0, info=info)
        alpha_min = res.objective / math.sqrt(2.0) * (1.0 + 1e-6)

    cache: dict[float, tuple[float, ConicResult | None]] = {}

    def inner(alpha: float) -> float:
        if alpha in cache:
            return cache[alpha][0]
        if alpha <= alpha_min:
            cache[alpha] = (math.inf, None)
            return math.inf
        obj = KlDualObjective(objective.components, delta, alpha)
        prog = _with_cones(base, laplace_domain_rows(obj.components, alpha, n), "domain")
        res = be.solve_smooth(prog, obj)
        val = res.objective if res.status == OPTIMAL else math.inf
        cache[alpha] = (val, res)
        return val

    logs = np.log(np.asarray(alpha_grid, dtype=float))
    vals = np.array([inner(math.exp(la)) for la in logs])
    i = int(np.argmin(vals))
    if not np.isfinite(vals[i]):
        return SolveReport("individual", NUMERICAL, wall_time=time.perf_counter() - t0, info=info)
    lo, hi = logs[max(i - 1, 0)], logs[min(i + 1, logs.size - 1)]
    golden_section(lambda la: inner(math.exp(la)), lo, hi, tol=alpha_tol)
    alpha_best = min(cache, key=lambda a: cache[a][0])
    val, res = cache[alpha_best]
    rep = _tau_report("individual", res, mdp, t0, alpha=alpha_best, **info)
    rep.objective = val
    rep.heuristic = heuristic
    return rep


# ---------------------------------------------------------------------------
# joint: alternating tau / y scheme


@dataclass(frozen=True)
class Algorithm1Config:
    y0: tuple = (0.95, 0.91)
    eps_hat: float = 0.8
    max_iter: int = 50
    tol: float = 1e-4
    step: float = 0.9
    line_search_tol: float = 1e-3
    form: str = "product"

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        if np.any(y0 < 0) or np.any(y0 > 1):
            raise ValueError("initial confidences must lie in [0, 1]")
        if not 0.0 < self.step < 1.0:
            raise ValueError("step length must lie in (0, 1)")
        if not 0.0 < self.eps_hat <= 1.0:
            raise ValueError("joint confidence must lie in (0, 1]")
        if joint_confidence_slack(y0, self.eps_hat, self.form) < -1e-12:
            raise ValueError(f"initial confidences {tuple(y0)} violate the joint-confidence constraint")
        if self.max_iter < 0 or self.tol <= 0:
            raise ValueError("max_iter must be >= 0 and tol > 0")

    def to_dict(self) -> dict:
        return {"y0": list(self.y0), "eps_hat": self.eps_hat, "max_iter": self.max_iter,
                "tol": self.tol, "step": self.step, "line_search_tol": self.line_search_tol,
                "form": self.form}

    @classmethod
    def from_dict(cls, d: dict) -> "Algorithm1Config":
        return cls(**{k: tuple(v) if k == "y0" else v for k, v in d.items()})


@dataclass
class IterationRecord:
    y: np.ndarray
    y_tilde: np.ndarray
    tau: np.ndarray
    value: float
    theta: np.ndarray
    box: tuple | None = None
    gamma: np.ndarray | None = None
    y_star: np.ndarray | None = None


def gamma_direction(theta, y_tilde, tau, specs) -> np.ndarray:
    """``theta_k (Q^{-1})'(1 - y~_k) sqrt(tau'S_k tau)``."""
    out = np.zeros(len(specs))
    for k, spec in enumerate(specs):
        law = spec.reference
        sd = math.sqrt(max(float(tau @ law.dispersion @ tau), 0.0))
        out[k] = theta[k] * std_quantile_derivative(law.generator, 1.0 - y_tilde[k]) * sd
    return out


def algorithm1(mdp: MdpInstance, specs, objective_ball: ObjectiveBall,
               config: Algorithm1Config | None = None, backend=None) -> SolveReport:
    """Alternate a tau-step at tightened levels and a y-step over the confidence split.

    Each pass: ``y~ = chi(y)``; solve the tau-subproblem for ``(tau, V, theta)``;
    bound ``y`` to the box in which ``tau`` remains feasible; solve the linear
    y-subproblem with direction ``Gamma``; damp ``y <- y + step (y* - y)``.
    Stops when successive ``y`` move less than ``tol`` or after ``max_iter``
    updates. The returned value is an upper bound (a stationary-point heuristic).
    """
    cfg = config or Algorithm1Config()
    t0 = time.perf_counter()
    be = get_backend(backend)
    K = len(specs)
    y = np.asarray(cfg.y0, dtype=float)
    if y.size != K:
        raise ValueError(f"y0 has {y.size} entries for {K} constraints")
    names = [f"chance[{k}]" for k in range(K)]
    records: list[IterationRecord] = []
    rep = SolveReport("joint", MAX_ITERATIONS, heuristic="stationary-point only",
                      info={"chi_direction": _direction(specs), "config": cfg.to_dict()})

    def finish(status, **extra):
        rep.status = status
        rep.iterations = max(len(records) - 1, 0)
        rep.wall_time = time.perf_counter() - t0
        rep.info.update(extra)
        rep.info["_records"] = records
        if records:
            last = records[-1]
            rep.tau, rep.objective = last.tau, last.value
            rep.policy = extract_policy(last.tau, mdp)
            rep.info["y_tilde"] = last.y_tilde.tolist()
        return rep

    prev = None
    n = 0
    while True:
        y_t = np.array([kl.adjust_confidence(v, s.radius) for v, s in zip(y, specs)])
        # a level of exactly 1 has an infinite quantile
        y_t = np.minimum(y_t, LEVEL_CAP)
        try:
            prog = build_joint_tau_subproblem(mdp, specs, objective_ball, y_t)
        except NonconvexityError as exc:
            return finish(INFEASIBLE_START if n == 0 else INFEASIBLE, diagnostic=str(exc))
        res = be.solve(prog)
        if res.status != OPTIMAL:
            status = INFEASIBLE_START if (n == 0 and res.status == INFEASIBLE) else res.status
            diag = "tau-subproblem infeasible at y0; try larger initial confidences" \
                if status == INFEASIBLE_START else f"tau-subproblem ended with {res.status}"
            return finish(status, diagnostic=diag)
        tau = clean_occupation(res.x, tol=1e-7)
        theta = multipliers(prog, res, names, be)
        rec = IterationRecord(y.copy(), y_t, tau, res.objective, theta)
        records.append(rec)
        rep.y_trace.append(y.tolist())
        rep.theta_trace.append(theta.tolist())
        rep.value_trace.append(res.objective)
        rep.duals = res.duals
        if prev is not None and np.linalg.norm(y - prev) < cfg.tol:
            return finish(CONVERGED)
        if n >= cfg.max_iter:
            return finish(MAX_ITERATIONS)
        try:
            box = y_box(tau, specs, ytol=cfg.line_search_tol, current=y)
            gam = gamma_direction(theta, y_t, tau, specs)
            sub = build_joint_y_subproblem(tau, specs, gam, box, cfg.eps_hat, cfg.form)
            y_star = sub.solve(keep=y)
        except EmptyBoxError as exc:
            return finish(EMPTY_BOX, diagnostic=str(exc))
        rec.box, rec.gamma, rec.y_star = (box.lower, box.upper), gam, y_star
        prev, y = y, y + cfg.step * (y_star - y)
        n += 1
