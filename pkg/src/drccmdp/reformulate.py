"""Deterministic equivalents of the KL distributionally robust programs.

Individual chance constraints become second-order-cone constraints at the
tightened level ``chi(eps_k, delta_k)``; a Gaussian objective ball contributes
``-tau@mu0 + sqrt(2 delta0) ||Sigma0^{1/2} tau||``. The joint program is split
into a tau-subproblem at fixed tightened levels and a y-subproblem over the
confidence allocation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kl
from .conic import ConicProgram, NormTerm, SocConstraint
from .distributions import (
    AssumptionError, EllipticalLaw, Gaussian, Laplace, MixtureLaw, std_quantile,
    std_upper_tail, generator_inf_nonpositive,
)
from .mdp import MdpInstance, build_occupation_polytope


class ReformulationError(ValueError):
    pass


class NonconvexityError(ReformulationError):
    """A chance constraint would need a positive quantile (level below 1/2)."""


class UnsupportedObjectiveError(ReformulationError):
    pass


class EmptyBoxError(ReformulationError):
    def __init__(self, k: int, message: str):
        self.k = k
        super().__init__(message)


Law = Union[EllipticalLaw, MixtureLaw]


@dataclass(frozen=True, eq=False)
class KlConstraintSpec:
    """``inf_{F in KL ball(reference, radius)} P_F(tau @ r >= threshold) >= confidence``.

    In joint mode ``confidence`` is ignored; the joint level lives in the solver config.
    """

    reference: Law
    threshold: float
    confidence: float = 0.8
    radius: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ReformulationError("threshold must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ReformulationError(f"confidence {self.confidence} outside [0, 1]")
        if not self.radius >= 0.0:
            raise ReformulationError(f"radius {self.radius} must be nonnegative")

    def with_radius(self, radius: float) -> "KlConstraintSpec":
        return KlConstraintSpec(self.reference, self.threshold, self.confidence, radius)

    def with_confidence(self, confidence: float) -> "KlConstraintSpec":
        return KlConstraintSpec(self.reference, self.threshold, confidence, self.radius)

    def components(self) -> list[tuple[float, EllipticalLaw]]:
        if isinstance(self.reference, MixtureLaw):
            return list(zip(self.reference.weights, self.reference.components))
        return [(1.0, self.reference)]


@dataclass(frozen=True, eq=False)
class ObjectiveBall:
    """KL ball around the reference law of the objective reward."""

    reference: Law
    radius: float = 0.0

    def __post_init__(self):
        if not self.radius >= 0.0:
            raise ReformulationError(f"radius {self.radius} must be nonnegative")

    def with_radius(self, radius: float) -> "ObjectiveBall":
        return ObjectiveBall(self.reference, radius)

    def components(self) -> list[tuple[float, EllipticalLaw]]:
        if isinstance(self.reference, MixtureLaw):
            return list(zip(self.reference.weights, self.reference.components))
        return [(1.0, self.reference)]


def _elliptical(law: Law, what: str) -> EllipticalLaw:
    if isinstance(law, MixtureLaw):
        if len(law) == 1:
            return law.components[0]
        raise ReformulationError(f"{what} must be a single elliptical law, not a mixture")
    return law


def _check_constraint_law(law: EllipticalLaw, k: int):
    if not isinstance(law.generator, (Gaussian, Laplace)):
        raise ReformulationError(
            f"constraint {k}: reference generator {law.generator.name} has no tractable CDF")


def check_objective_ball(ball: ObjectiveBall, dim: int) -> EllipticalLaw:
    law = _elliptical(ball.reference, "objective reference")
    if law.dim != dim:
        raise ReformulationError(f"objective law has dimension {law.dim}, expected {dim}")
    if not law.is_positive_definite():
        raise AssumptionError("objective dispersion must be positive definite")
    if generator_inf_nonpositive(law.generator) < math.exp(-ball.radius):
        raise AssumptionError("inf_{t<=0} psi0(t) >= exp(-delta0) fails")
    return law


def chance_cone(k: int, law: EllipticalLaw, threshold: float, level: float,
                name: str | None = None) -> SocConstraint:
    """``tau@mu + Q(1 - level) ||R tau|| >= threshold`` with ``Q`` the standardized quantile."""
    _check_constraint_law(law, k)
    if level < 0.5:
        raise NonconvexityError(
            f"constraint {k}: tightened level {level:.6g} < 1/2 is not second-order-cone representable")
    if level >= 1.0:
        raise ReformulationError(f"constraint {k}: tightened level 1 requires a degenerate reward")
    q = 0.0 if level == 0.5 else std_quantile(law.generator, 1.0 - level)
    assert q <= 0.0, "cone multiplier must be nonpositive"
    return SocConstraint(name or f"chance[{k}]", law.location.copy(), -float(threshold), -q,
                         law.sqrt_dispersion(), np.zeros(law.dim))


def _base_program(mdp: MdpInstance, objective: np.ndarray, norm_terms, cones, meta) -> ConicProgram:
    poly = build_occupation_polytope(mdp)
    n = mdp.num_pairs
    return ConicProgram(
        num_vars=n, objective=objective, norm_terms=tuple(norm_terms),
        eq_matrix=poly.eq_matrix, eq_rhs=poly.eq_rhs,
        eq_names=tuple(f"occupation[{s}]" for s in range(mdp.num_states)),
        cones=tuple(cones), lower=np.zeros(n),
        var_names=tuple(f"tau[{s},{a}]" for s, a in mdp.state_action_index()), meta=meta)


def _gaussian_objective(ball: ObjectiveBall, n: int):
    law = check_objective_ball(ball, n)
    if not isinstance(law.generator, Gaussian):
        raise UnsupportedObjectiveError(
            f"{law.generator.name} objective reference has no closed-form dual; "
            "use solve_individual_nongaussian")
    terms = []
    if ball.radius > 0:
        terms.append(NormTerm(math.sqrt(2.0 * ball.radius), law.sqrt_dispersion(), np.zeros(n)))
    return -law.location, terms


def _constraint_cones(specs, levels, n):
    levels = [float(v) for v in levels]
    if len(levels) != len(specs):
        raise ReformulationError("need one level per constraint")
    cones = []
    for k, (spec, level) in enumerate(zip(specs, levels)):
        law = _elliptical(spec.reference, f"constraint {k} reference")
        if law.dim != n:
            raise ReformulationError(f"constraint {k} law has dimension {law.dim}, expected {n}")
        cones.append(chance_cone(k, law, spec.threshold, level))
    return levels, cones


def build_constraint_program(mdp: MdpInstance, specs: Sequence[KlConstraintSpec], levels,
                             objective=None) -> ConicProgram:
    """Occupation polytope plus chance cones at ``levels`` and a linear objective (default 0)."""
    n = mdp.num_pairs
    levels, cones = _constraint_cones(specs, levels, n)
    c = np.zeros(n) if objective is None else np.asarray(objective, dtype=float)
    return _base_program(mdp, c, (), cones,
                         {"levels": levels, "quantiles": [-k.scale for k in cones]})


def build_tau_program(mdp: MdpInstance, specs: Sequence[KlConstraintSpec],
                      objective_ball: ObjectiveBall, levels) -> ConicProgram:
    """Gaussian-objective SOCP with constraint ``k`` enforced at reference level ``levels[k]``."""
    n = mdp.num_pairs
    c, terms = _gaussian_objective(objective_ball, n)
    levels, cones = _constraint_cones(specs, levels, n)
    meta = {"levels": levels, "quantiles": [-k.scale for k in cones],
            "objective_radius": objective_ball.radius}
    return _base_program(mdp, c, terms, cones, meta)


def build_individual(mdp: MdpInstance, specs: Sequence[KlConstraintSpec],
                     objective_ball: ObjectiveBall) -> ConicProgram:
    """Individual KL-robust chance-constrained program as a SOCP."""
    levels = [kl.adjust_confidence(s.confidence, s.radius) for s in specs]
    prog = build_tau_program(mdp, specs, objective_ball, levels)
    prog.meta["mode"] = "individual"
    prog.meta["confidences"] = [s.confidence for s in specs]
    prog.meta["radii"] = [s.radius for s in specs]
    return prog


def build_joint_tau_subproblem(mdp: MdpInstance, specs: Sequence[KlConstraintSpec],
                               objective_ball: ObjectiveBall, y_tilde) -> ConicProgram:
    """tau-subproblem of the joint program at fixed tightened levels ``y_tilde``."""
    prog = build_tau_program(mdp, specs, objective_ball, y_tilde)
    prog.meta["mode"] = "joint-tau"
    return prog


# ---------------------------------------------------------------------------
# y-subproblem


def satisfaction_probability(tau, law: Law, threshold: float) -> float:
    """Reference probability ``P(tau @ r >= threshold)`` (mixtures: weighted sum)."""
    if isinstance(law, MixtureLaw):
        return float(sum(w * satisfaction_probability(tau, c, threshold)
                         for w, c in zip(law.weights, law.components)))
    tau = np.asarray(tau, dtype=float)
    mean = float(tau @ law.location)
    sd = math.sqrt(max(float(tau @ law.dispersion @ tau), 0.0))
    if sd == 0.0:
        return 1.0 if mean >= threshold else 0.0
    return std_upper_tail(law.generator, (threshold - mean) / sd)


# keeps tightened levels strictly below 1 so quantiles stay finite
Y_CAP = 1.0 - 1e-9


@dataclass(frozen=True)
class YBox:
    lower: np.ndarray
    upper: np.ndarray
    # bracket of each bound before the conservative pick, for diagnostics
    targets: tuple = ()


def y_box(tau, specs: Sequence[KlConstraintSpec], ytol: float | None = None,
          current=None) -> YBox:
    """Confidence box for which the current ``tau`` stays feasible.

    Realizes ``1/2 <= chi_k(y_k) <= P_k(tau)`` as an interval in ``y_k``. The
    bounds come from inverting ``chi``; with a coarse ``ytol`` the inner end of
    each bisection bracket is taken so the box never admits an infeasible y.
    ``current`` is a confidence vector already known to be admissible for
    ``tau`` (the iterate that produced it); the box is widened to contain it so
    the coarse bracket cannot cut it off.
    """
    lo, hi, targets = [], [], []
    for k, spec in enumerate(specs):
        delta = spec.radius
        p = satisfaction_probability(tau, spec.reference, spec.threshold)
        c0, c1 = kl.adjust_range(delta)
        increasing = kl.is_increasing(delta)
        a_lo, a_hi = (c0, c1) if increasing else (c1, c0)

        def inv(target, want_low_side):
            # want_low_side: pick the bracket end with the smaller y
            _, a, b = kl.inverse_bracket(target, delta, ytol=ytol)
            return a if want_low_side else b

        # y values where chi crosses 1/2 and p
        if increasing:
            y_half = 0.0 if 0.5 <= a_lo else (1.0 if 0.5 > a_hi else inv(0.5, False))
            if p < a_lo:
                raise EmptyBoxError(k, f"constraint {k}: P={p:.6g} below attainable level {a_lo:.6g}")
            y_p = 1.0 if p >= a_hi else inv(p, True)
            l_k, u_k = y_half, y_p
        else:
            y_half = 1.0 if 0.5 <= a_lo else (0.0 if 0.5 > a_hi else inv(0.5, True))
            if p < a_lo:
                raise EmptyBoxError(k, f"constraint {k}: P={p:.6g} below attainable level {a_lo:.6g}")
            y_p = 0.0 if p >= a_hi else inv(p, False)
            l_k, u_k = y_p, y_half
        u_k = min(u_k, Y_CAP)
        if current is not None:
            l_k, u_k = min(l_k, float(current[k])), max(u_k, float(current[k]))
        if u_k < l_k:
            raise EmptyBoxError(k, f"constraint {k}: empty confidence box [{l_k:.6g}, {u_k:.6g}]")
        lo.append(l_k)
        hi.append(u_k)
        targets.append((0.5, p))
    return YBox(np.array(lo), np.array(hi), tuple(targets))


@dataclass(frozen=True, eq=False)
class YSubproblem:
    """``min gamma @ y`` s.t. ``lower <= y <= upper`` and the joint-confidence constraint.

    ``form="product"``: ``sum(log y) >= log(eps_hat)``; ``form="sum"``: ``sum(y) >= eps_hat``.
    """

    gamma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eps_hat: float
    form: str = "product"

    def feasible(self, y, tol: float = 1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        if np.any(y < self.lower - tol) or np.any(y > self.upper + tol):
            return False
        return joint_confidence_slack(y, self.eps_hat, self.form) >= -tol

    def solve(self, keep=None) -> np.ndarray:
        g = np.asarray(self.gamma, dtype=float)
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if joint_confidence_slack(hi, self.eps_hat, self.form) < -1e-12:
            raise EmptyBoxError(-1, "joint confidence unattainable inside the confidence box")
        if keep is not None and np.all(g == 0):
            return np.asarray(keep, dtype=float).copy()
        if self.form == "sum":
            return _solve_sum(g, lo, hi, self.eps_hat)
        if self.form != "product":
            raise ValueError(f"unknown joint-confidence form {self.form!r}")
        return _solve_product(g, lo, hi, self.eps_hat)


def joint_confidence_slack(y, eps_hat: float, form: str = "product") -> float:
    y = np.asarray(y, dtype=float)
    if form == "sum":
        return float(y.sum() - eps_hat)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(y)) - math.log(eps_hat))


def _solve_product(g, lo, hi, eps_hat):
    target = math.log(eps_hat)
    free = g <= 0
    y = np.where(free, hi, lo)
    with np.errstate(divide="ignore"):
        if np.sum(np.log(y)) >= target:
            return y

    def y_of(lam):
        return np.where(free, hi, np.clip(lam / np.where(free, 1.0, g), lo, hi))

    def slack(lam):
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(y_of(lam)))) - target

    a, b = 0.0, float(np.max(np.where(free, 0.0, g * hi)))
    # y_of(b) == hi, which is feasible
    for _ in range(300):
        m = 0.5 * (a + b)
        if slack(m) >= 0:
            b = m
        else:
            a = m
        if b - a <= 1e-16 * max(b, 1e-300):
            break
    return y_of(b)


def _solve_sum(g, lo, hi, eps_hat):
    y = np.where(g <= 0, hi, lo).astype(float)
    deficit = eps_hat - y.sum()
    for k in np.argsort(g, kind="stable"):
        if deficit <= 0:
            break
        if g[k] <= 0:
            continue
        step = min(hi[k] - y[k], deficit)
        y[k] += step
        deficit -= step
    return y


def build_joint_y_subproblem(tau, specs: Sequence[KlConstraintSpec], gamma, bounds: YBox,
                             eps_hat: float, form: str = "product") -> YSubproblem:
    """Linear-objective convex program over the confidence allocation ``y``."""
    if not 0.0 < eps_hat <= 1.0:
        raise ReformulationError(f"joint confidence {eps_hat} outside (0, 1]")
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size != len(specs) or bounds.lower.size != len(specs):
        raise ReformulationError("need one direction and one box per constraint")
    for k, (l_k, u_k) in enumerate(zip(bounds.lower, bounds.upper)):
        if u_k < l_k:
            raise EmptyBoxError(k, f"constraint {k}: empty confidence box")
    return YSubproblem(gamma, bounds.lower.copy(), bounds.upper.copy(), float(eps_hat), form)


__all__ = [
    "KlConstraintSpec", "ObjectiveBall", "build_individual", "build_tau_program",
    "build_constraint_program",
    "build_joint_tau_subproblem", "build_joint_y_subproblem", "y_box", "YBox", "YSubproblem",
    "satisfaction_probability", "joint_confidence_slack", "chance_cone",
    "ReformulationError", "NonconvexityError", "UnsupportedObjectiveError", "EmptyBoxError",
]
