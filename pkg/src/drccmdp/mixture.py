"""Joint KL-robust program with elliptical-mixture reference laws.

Variables ``(tau, alpha, x, y, y_hat, l)``:

    min  alpha log sum_j w0_j exp(-tau@mu0_j / alpha) psi0_j(-tau'S0_j tau / 2 alpha^2) + alpha delta0
    s.t. tau@mu_jk + Q_jk(1 - l_jk) ||S_jk^{1/2} tau|| >= xi_k      (per component j of constraint k)
         sum_j w_jk l_jk >= y_hat_k
         y_hat_k >= (exp(-delta_k) x_k^y_k - 1) / (x_k - 1)
         0 < x_k < 1,  y, y_hat, l in [0, 1],  joint confidence on y,  tau in the polytope.

No exact method is known for this nonconvex program; :func:`solve_mixture_heuristic`
is a block-coordinate scheme returning a verified-feasible stationary candidate.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import kl
from .conic import ConicProgram, SocConstraint
from .distributions import (
    AssumptionError, Gaussian, Laplace, MixtureLaw, UnsupportedGeneratorError,
    generator_inf_nonpositive, std_quantile, std_quantile_derivative, std_upper_tail,
)
from .linesearch import golden_section
from .mdp import MdpInstance, build_occupation_polytope, clean_occupation, extract_policy
from .objectives import KlDualObjective, laplace_domain_rows
from .reformulate import (
    EmptyBoxError, KlConstraintSpec, ObjectiveBall, ReformulationError,
    build_joint_y_subproblem, joint_confidence_slack, y_box,
)
from .report import CONVERGED, EMPTY_BOX, MAX_ITERATIONS, SolveReport
from .solvers import INFEASIBLE, NUMERICAL, OPTIMAL, get_backend

log = logging.getLogger(__name__)

L_MIN = 0.5  # component levels kept in the second-order-cone representable range
LEVEL_CAP = 1.0 - 1e-12


def _as_mixture(law) -> MixtureLaw:
    return law if isinstance(law, MixtureLaw) else MixtureLaw.single(law)


@dataclass(frozen=True)
class MixturePoint:
    tau: np.ndarray
    alpha: float
    x: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    levels: tuple  # levels[k][j] = l_jk


@dataclass(frozen=True, eq=False)
class MixtureProgramDescription:
    mdp: MdpInstance
    constraints: tuple      # MixtureLaw per constraint
    thresholds: np.ndarray
    radii: np.ndarray
    objective: MixtureLaw
    objective_radius: float
    eps_hat: float
    form: str = "product"

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def objective_function(self) -> KlDualObjective:
        return KlDualObjective(tuple(zip(self.objective.weights, self.objective.components)),
                               self.objective_radius)

    def mean_objective(self) -> np.ndarray:
        """Mixture mean of the objective reward."""
        return sum(w * c.location for w, c in zip(self.objective.weights, self.objective.components))

    def objective_value(self, tau, alpha: float) -> float:
        """Objective at ``(tau, alpha)``; ``alpha = inf`` gives the ``-tau@mean`` limit."""
        tau = np.asarray(tau, dtype=float)
        if math.isinf(alpha):
            return -float(tau @ self.mean_objective()) if self.objective_radius == 0 else math.inf
        return self.objective_function().value(tau, alpha)

    def best_alpha(self, tau) -> tuple[float, float]:
        """``min_alpha`` of the objective at fixed ``tau`` (1-D, log-space golden section)."""
        if self.objective_radius == 0:
            return math.inf, self.objective_value(tau, math.inf)
        f = self.objective_function()
        grid = np.logspace(-6, 6, 200)
        vals = np.array([f.value(tau, a) for a in grid])
        i = int(np.argmin(vals))
        lo, hi = math.log(grid[max(i - 1, 0)]), math.log(grid[min(i + 1, grid.size - 1)])
        la, v = golden_section(lambda t: f.value(tau, math.exp(t)), lo, hi, tol=1e-10)
        return (math.exp(la), v) if v < vals[i] else (float(grid[i]), float(vals[i]))

    def component_probabilities(self, tau) -> list[np.ndarray]:
        """``P_jk(tau @ r_k >= xi_k)`` per component."""
        tau = np.asarray(tau, dtype=float)
        out = []
        for mix, xi in zip(self.constraints, self.thresholds):
            ps = []
            for c in mix.components:
                m, v = float(tau @ c.location), float(tau @ c.dispersion @ tau)
                if v <= 0:
                    ps.append(1.0 if m >= xi else 0.0)
                else:
                    ps.append(std_upper_tail(c.generator, (xi - m) / math.sqrt(v)))
            out.append(np.array(ps))
        return out

    def residuals(self, pt: MixturePoint) -> dict:
        """Worst violation per constraint family (0 when satisfied)."""
        tau = np.asarray(pt.tau, dtype=float)
        poly = build_occupation_polytope(self.mdp)
        out = {"polytope": poly.residual(tau), "nonnegativity": max(0.0, -float(tau.min())),
               "component": 0.0, "aggregation": 0.0, "coupling": 0.0, "boxes": 0.0, "joint": 0.0}
        for k, (mix, xi) in enumerate(zip(self.constraints, self.thresholds)):
            lk = np.asarray(pt.levels[k], dtype=float)
            for c, l in zip(mix.components, lk):
                sd = math.sqrt(max(float(tau @ c.dispersion @ tau), 0.0))
                q = std_quantile(c.generator, 1.0 - l) if 0.0 < l < 1.0 else (
                    math.inf if l <= 0 else -math.inf)
                lhs = float(tau @ c.location) + (q * sd if sd > 0 else 0.0)
                out["component"] = max(out["component"], xi - lhs)
            out["aggregation"] = max(out["aggregation"], float(pt.y_hat[k] - mix.weights @ lk))
            xk = float(pt.x[k])
            h = kl.kl_ratio(xk, float(pt.y[k]), float(self.radii[k])) if 0 < xk < 1 else math.inf
            out["coupling"] = max(out["coupling"], h - float(pt.y_hat[k]))
            vals = np.concatenate([lk, [pt.y[k], pt.y_hat[k]]])
            out["boxes"] = max(out["boxes"], float(np.max(-vals)), float(np.max(vals - 1.0)),
                               0.0 if 0 < xk < 1 else math.inf)
        out["joint"] = max(0.0, -joint_confidence_slack(pt.y, self.eps_hat, self.form))
        return out

    def is_feasible(self, pt: MixturePoint, tol: float = 1e-6) -> bool:
        return max(self.residuals(pt).values()) <= tol


def build_mixture_program(mdp: MdpInstance, specs, objective_ball: ObjectiveBall,
                          eps_hat: float = 0.8, form: str = "product") -> MixtureProgramDescription:
    """Validate the mixture assumptions and collect the program data."""
    n = mdp.num_pairs
    obj = _as_mixture(objective_ball.reference)
    delta0 = objective_ball.radius
    for j, c in enumerate(obj.components):
        if c.dim != n:
            raise ReformulationError(f"objective component {j} has dimension {c.dim}, expected {n}")
        if not c.is_positive_definite():
            raise AssumptionError(f"objective component {j}: dispersion is not positive definite")
        if np.any(c.location > 0):
            raise AssumptionError(f"objective component {j}: mean has positive entries (mu0_j <= 0 fails)")
        try:
            inf_psi = generator_inf_nonpositive(c.generator)
        except UnsupportedGeneratorError as exc:
            raise AssumptionError(
                f"objective component {j}: inf_(t<=0) psi(t) >= exp(-delta0) cannot be established "
                f"({exc})") from exc
        if inf_psi < math.exp(-delta0):
            raise AssumptionError(f"objective component {j}: inf_(t<=0) psi(t) >= exp(-delta0) fails")
    mixes = []
    for k, s in enumerate(specs):
        mix = _as_mixture(s.reference)
        for j, c in enumerate(mix.components):
            if c.dim != n:
                raise ReformulationError(f"constraint {k} component {j}: dimension {c.dim}, expected {n}")
            if not isinstance(c.generator, (Gaussian, Laplace)):
                raise ReformulationError(
                    f"constraint {k} component {j}: {c.generator.name} has no tractable CDF")
        mixes.append(mix)
    if form not in ("product", "sum"):
        raise ValueError(f"unknown joint-confidence form {form!r}")
    if not 0.0 < eps_hat <= 1.0:
        raise ReformulationError(f"joint confidence {eps_hat} outside (0, 1]")
    return MixtureProgramDescription(
        mdp, tuple(mixes), np.array([s.threshold for s in specs], float),
        np.array([s.radius for s in specs], float), obj, float(delta0), float(eps_hat), form)


@dataclass(frozen=True)
class MixtureConfig:
    y0: tuple = (0.95, 0.91)
    max_iter: int = 50
    tol: float = 1e-4
    step: float = 0.9
    line_search_tol: float = 1e-3
    phase1_steps: int = 10
    verify_tol: float = 1e-6


def _tau_step(desc: MixtureProgramDescription, levels, backend):
    """Solve for ``(tau, alpha)`` at fixed component levels; returns (status, tau, alpha, value, theta)."""
    mdp = desc.mdp
    n = mdp.num_pairs
    free_alpha = desc.objective_radius > 0
    N = n + 1 if free_alpha else n
    poly = build_occupation_polytope(mdp)

    def pad(a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            return np.concatenate([a, np.zeros(N - n)])
        return np.hstack([a, np.zeros((a.shape[0], N - n))])

    cones = []
    for k, (mix, xi) in enumerate(zip(desc.constraints, desc.thresholds)):
        for j, (c, l) in enumerate(zip(mix.components, levels[k])):
            q = 0.0 if l == 0.5 else std_quantile(c.generator, 1.0 - min(l, LEVEL_CAP))
            cones.append(SocConstraint(f"chance[{k},{j}]", pad(c.location), -float(xi), -q,
                                       pad(c.sqrt_dispersion()), np.zeros(n)))
    objective = desc.objective_function()
    if free_alpha:
        for i, (lin, off, M) in enumerate(
                laplace_domain_rows(objective.components, None, n)):
            cones.append(SocConstraint(f"domain[{i}]", lin, off, 1.0, M, np.zeros(M.shape[0])))
    lower = np.zeros(N)
    prog = ConicProgram(
        num_vars=N, objective=np.zeros(N) if free_alpha else -desc.mean_objective(),
        eq_matrix=pad(poly.eq_matrix), eq_rhs=poly.eq_rhs,
        eq_names=tuple(f"occupation[{s}]" for s in range(mdp.num_states)),
        cones=tuple(cones), lower=lower)
    be = backend
    res = be.solve_smooth(prog, objective) if free_alpha else be.solve(prog)
    if res.status != OPTIMAL:
        return res.status, None, None, math.inf, None
    tau = clean_occupation(res.x[:n], tol=1e-7)
    alpha = float(res.x[n]) if free_alpha else math.inf
    theta = [np.array([max(res.duals.get(f"chance[{k},{j}]", 0.0), 0.0)
                       for j in range(len(mix))]) for k, mix in enumerate(desc.constraints)]
    return OPTIMAL, tau, alpha, res.objective, theta


def _allocate(y_hat_k: float, weights, probs, price) -> np.ndarray:
    """Cheapest component levels with ``sum w l >= y_hat`` and ``l in [1/2, p]``.

    Raises ``EmptyBoxError`` when the components cannot reach ``y_hat``.
    """
    hi = np.maximum(np.minimum(probs, LEVEL_CAP), L_MIN)
    l = np.full(len(weights), L_MIN)
    deficit = y_hat_k - float(weights @ l)
    for j in np.argsort(price, kind="stable"):
        if deficit <= 0:
            break
        if weights[j] == 0:
            continue
        add = min(hi[j] - l[j], deficit / weights[j])
        l[j] += add
        deficit -= weights[j] * add
    if deficit > 1e-9:
        raise EmptyBoxError(-1, f"component levels cannot reach {y_hat_k:.6g}")
    return l


def _marginal_price(price, levels, probs, eps: float = 1e-9) -> float:
    """Rate of objective change per unit of ``y_hat`` at the current split.

    Lowering ``y_hat`` releases the most expensive component still above 1/2;
    if none is, raising it costs the cheapest component with room below its
    probability. One component gives its own price either way.
    """
    finite = np.isfinite(price)
    down = finite & (levels > L_MIN + eps)
    if down.any():
        return float(np.max(price[down]))
    up = finite & (levels < probs - eps)
    if up.any():
        return float(np.min(price[up]))
    return float(np.min(price[finite])) if finite.any() else 0.0


def _verified_point(desc, tau, alpha, y, levels) -> MixturePoint:
    y_hat = np.array([kl.adjust_confidence(v, d) for v, d in zip(y, desc.radii)])
    x = np.array([min(max(kl.adjust_confidence_argmin(v, d), 1e-12), 1 - 1e-9)
                  for v, d in zip(y, desc.radii)])
    # the coupling holds at the interior x up to the transform's grid accuracy
    y_hat = np.array([min(max(yh, kl.kl_ratio(xk, v, d)), 1.0)
                      for yh, xk, v, d in zip(y_hat, x, y, desc.radii)])
    return MixturePoint(tau, alpha, x, np.asarray(y, float), y_hat, tuple(np.asarray(l) for l in levels))


def _phase1_starts(K: int, eps_hat: float, form: str, steps: int):
    for w in itertools.product(range(1, steps), repeat=K):
        if sum(w) != steps:
            continue
        w = np.array(w, float) / steps
        if form == "product":
            yield np.power(eps_hat, w)
        else:
            yield np.minimum(1.0, eps_hat * w + (1 - eps_hat) * 0.5)


def solve_mixture_heuristic(desc: MixtureProgramDescription, config: MixtureConfig | None = None,
                            backend=None) -> SolveReport:
    """Block-coordinate heuristic (stationary candidates only).

    (a) at fixed component levels ``l`` solve for ``(tau, alpha)`` jointly (the
    objective is a perspective of a log-sum-exp, convex in both); (b) at fixed
    ``tau`` move ``y`` inside the box where the mixture probabilities still
    support it, along the dual-weighted direction, then re-split ``y_hat = chi(y)``
    over components, cheapest first. Component levels are kept at or above 1/2.
    With one component per law this reduces to the alternating joint scheme.
    """
    cfg = config or MixtureConfig()
    t0 = time.perf_counter()
    be = get_backend(backend or "cvxopt")
    K = desc.num_constraints
    weights = [m.weights for m in desc.constraints]
    specs = [KlConstraintSpec(m, float(xi), 0.5, float(d))
             for m, xi, d in zip(desc.constraints, desc.thresholds, desc.radii)]
    rep = SolveReport("mixture", MAX_ITERATIONS, heuristic="stationary-point only",
                      info={"form": desc.form, "chi_direction": [
                          "increasing" if kl.is_increasing(d) else "decreasing" for d in desc.radii]})

    def levels_for(y, probs=None, price=None):
        out = []
        for k in range(K):
            yh = min(kl.adjust_confidence(float(y[k]), float(desc.radii[k])), LEVEL_CAP)
            if probs is None:
                out.append(np.full(len(weights[k]), max(yh, L_MIN)))
            else:
                out.append(_allocate(max(yh, L_MIN), weights[k], probs[k], price[k]))
        return out

    # phase 1: a y whose uniform split gives a feasible tau-step
    starts = [np.asarray(cfg.y0, float)] if len(cfg.y0) == K else []
    starts += list(_phase1_starts(K, desc.eps_hat, desc.form, cfg.phase1_steps))
    found = None
    for y in starts:
        if joint_confidence_slack(y, desc.eps_hat, desc.form) < -1e-12:
            continue
        levels = levels_for(y)
        step = _tau_step(desc, levels, be)
        if step[0] == OPTIMAL:
            found = (y, levels, step)
            break
        if step[0] not in (INFEASIBLE, NUMERICAL):
            break
    if found is None:
        rep.status = INFEASIBLE
        rep.wall_time = time.perf_counter() - t0
        rep.info["diagnostic"] = "phase-1 search found no feasible starting allocation"
        return rep

    y, levels, (_, tau, alpha, value, theta) = found
    prev = None
    n_iter = 0
    status = MAX_ITERATIONS
    while True:
        rep.y_trace.append(y.tolist())
        rep.theta_trace.append([t.tolist() for t in theta])
        rep.value_trace.append(value)
        best = (tau, alpha, value, y.copy(), [l.copy() for l in levels])
        if prev is not None and np.linalg.norm(y - prev) < cfg.tol:
            status = CONVERGED
            break
        if n_iter >= cfg.max_iter:
            break
        probs = desc.component_probabilities(tau)
        price_jk, gam = [], np.zeros(K)
        for k, mix in enumerate(desc.constraints):
            g = np.array([theta[k][j] * std_quantile_derivative(c.generator, 1.0 - levels[k][j])
                          * math.sqrt(max(float(tau @ c.dispersion @ tau), 0.0))
                          for j, c in enumerate(mix.components)])
            with np.errstate(divide="ignore"):
                pr = np.where(weights[k] > 0, g / np.where(weights[k] > 0, weights[k], 1.0), np.inf)
            price_jk.append(pr)
            gam[k] = _marginal_price(pr, levels[k], probs[k])
        try:
            box = y_box(tau, specs, ytol=cfg.line_search_tol, current=y)
            sub = build_joint_y_subproblem(tau, specs, gam, box, desc.eps_hat, desc.form)
            y_star = sub.solve(keep=y)
        except EmptyBoxError as exc:
            status = EMPTY_BOX
            rep.info["diagnostic"] = str(exc)
            break
        # the box bracket is approximate; back off toward the supported y if needed
        t = cfg.step
        for _ in range(30):
            y_new = y + t * (y_star - y)
            try:
                new_levels = levels_for(y_new, probs, price_jk)
                break
            except EmptyBoxError:
                t *= 0.5
        else:
            y_new, new_levels = y, levels_for(y, probs, price_jk)
        step = _tau_step(desc, new_levels, be)
        if step[0] != OPTIMAL:
            status = step[0]
            rep.info["diagnostic"] = f"tau-step ended with {step[0]}"
            break
        prev, y, levels = y, y_new, new_levels
        _, tau, alpha, value, theta = step
        n_iter += 1

    tau, alpha, value, y, levels = best
    if desc.objective_radius > 0:
        value = desc.objective_value(tau, alpha)
    point = _verified_point(desc, tau, alpha, y, levels)
    resid = desc.residuals(point)
    rep.status = status
    rep.tau, rep.objective = tau, value
    rep.policy = extract_policy(tau, desc.mdp)
    rep.iterations = n_iter
    rep.wall_time = time.perf_counter() - t0
    rep.info.update({"alpha": alpha, "levels": [l.tolist() for l in levels],
                     "y_hat": point.y_hat.tolist(), "x": point.x.tolist(),
                     "residuals": resid, "verified": max(resid.values()) <= cfg.verify_tol,
                     "_point": point})
    if not rep.info["verified"]:
        log.warning("mixture heuristic point fails verification: %s", resid)
    return rep
