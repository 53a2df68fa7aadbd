"""Solver-facing normal form for the second-order-cone programs built here.

    minimize    c @ x + sum_i w_i * ||A_i x + b_i|| + const
    subject to  A_eq x  = b_eq
                G x    <= h
                f_j @ x + d_j >= k_j * ||F_j x + e_j||     (named cone constraints)
                lower <= x <= upper
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class NormTerm:
    weight: float
    matrix: np.ndarray
    shift: np.ndarray

    def value(self, x) -> float:
        return self.weight * float(np.linalg.norm(self.matrix @ x + self.shift))


@dataclass(frozen=True, eq=False)
class SocConstraint:
    """``linear @ x + offset >= scale * ||matrix @ x + shift||``."""

    name: str
    linear: np.ndarray
    offset: float
    scale: float
    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale < 0:
            raise ValueError(f"cone scale for {self.name!r} must be finite and nonnegative")

    def slack(self, x) -> float:
        """Left side minus right side; nonnegative when satisfied."""
        x = np.asarray(x)
        return float(self.linear @ x + self.offset
                     - self.scale * np.linalg.norm(self.matrix @ x + self.shift))


def _block(a, n):
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, n))
    return a.reshape(1, -1) if a.ndim == 1 else a


@dataclass(frozen=True, eq=False)
class ConicProgram:
    num_vars: int
    objective: np.ndarray
    norm_terms: tuple = ()
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    eq_names: tuple = ()
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    ineq_names: tuple = ()
    cones: tuple = ()
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    objective_constant: float = 0.0
    var_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(self.num_vars)
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        if c.size != n:
            raise ValueError(f"objective has {c.size} entries for {n} variables")
        for t in self.norm_terms:
            if t.matrix.shape[1] != n or t.shift.size != t.matrix.shape[0]:
                raise ValueError("norm term dimensions are inconsistent")
        A = _block(self.eq_matrix, n)
        b = np.zeros(0) if self.eq_rhs is None else np.asarray(self.eq_rhs, float).reshape(-1)
        G = _block(self.ineq_matrix, n)
        h = np.zeros(0) if self.ineq_rhs is None else np.asarray(self.ineq_rhs, float).reshape(-1)
        if A.shape != (b.size, n):
            raise ValueError("equality block dimensions are inconsistent")
        if G.shape != (h.size, n):
            raise ValueError("inequality block dimensions are inconsistent")
        for k in self.cones:
            if k.linear.size != n or k.matrix.shape[1] != n or k.shift.size != k.matrix.shape[0]:
                raise ValueError(f"cone {k.name!r} dimensions are inconsistent")
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float).reshape(-1)
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float).reshape(-1)
        if lo.size != n or hi.size != n:
            raise ValueError("bounds must have one entry per variable")
        eq_names = tuple(self.eq_names) or tuple(f"eq[{i}]" for i in range(A.shape[0]))
        ineq_names = tuple(self.ineq_names) or tuple(f"ineq[{i}]" for i in range(G.shape[0]))
        if len(eq_names) != A.shape[0] or len(ineq_names) != G.shape[0]:
            raise ValueError("constraint names must match constraint counts")
        names = [*eq_names, *ineq_names, *(k.name for k in self.cones)]
        if len(set(names)) != len(names):
            raise ValueError("constraint names must be unique")
        for attr, val in (("num_vars", n), ("objective", c), ("eq_matrix", A), ("eq_rhs", b),
                          ("ineq_matrix", G), ("ineq_rhs", h), ("lower", lo), ("upper", hi),
                          ("eq_names", eq_names), ("ineq_names", ineq_names),
                          ("norm_terms", tuple(self.norm_terms)), ("cones", tuple(self.cones))):
            object.__setattr__(self, attr, val)

    def cone(self, name: str) -> SocConstraint:
        for k in self.cones:
            if k.name == name:
                return k
        raise KeyError(name)

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.objective @ x + sum(t.value(x) for t in self.norm_terms)
                     + self.objective_constant)

    def residuals(self, x) -> dict:
        """Worst violation per constraint class (0 when satisfied)."""
        x = np.asarray(x, dtype=float)
        out = {"eq": 0.0, "ineq": 0.0, "cone": 0.0, "bounds": 0.0}
        if self.eq_rhs.size:
            out["eq"] = float(np.max(np.abs(self.eq_matrix @ x - self.eq_rhs)))
        if self.ineq_rhs.size:
            out["ineq"] = float(max(0.0, np.max(self.ineq_matrix @ x - self.ineq_rhs)))
        if self.cones:
            out["cone"] = float(max(0.0, max(-k.slack(x) for k in self.cones)))
        out["bounds"] = float(max(0.0, np.max(self.lower - x), np.max(x - self.upper)))
        return out

    def max_residual(self, x) -> float:
        return max(self.residuals(x).values())

    def with_cone_offset(self, name: str, delta: float) -> "ConicProgram":
        """Copy with one cone constraint's offset shifted by ``delta``."""
        cones = tuple(
            SocConstraint(k.name, k.linear, k.offset + delta, k.scale, k.matrix, k.shift)
            if k.name == name else k for k in self.cones)
        return _replace(self, cones=cones)

    # -- JSON normal form ---------------------------------------------------

    def to_dict(self) -> dict:
        def m(a):
            return np.asarray(a).tolist()

        def bound(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {
            "format": "drccmdp-conic/1",
            "num_vars": self.num_vars,
            "var_names": list(self.var_names),
            "objective": {"linear": m(self.objective), "constant": self.objective_constant,
                          "norm_terms": [{"weight": t.weight, "matrix": m(t.matrix),
                                          "shift": m(t.shift)} for t in self.norm_terms]},
            "equalities": {"matrix": m(self.eq_matrix), "rhs": m(self.eq_rhs),
                           "names": list(self.eq_names)},
            "inequalities": {"matrix": m(self.ineq_matrix), "rhs": m(self.ineq_rhs),
                             "names": list(self.ineq_names)},
            "cones": [{"name": k.name, "linear": m(k.linear), "offset": k.offset,
                       "scale": k.scale, "matrix": m(k.matrix), "shift": m(k.shift)}
                      for k in self.cones],
            "bounds": {"lower": bound(self.lower), "upper": bound(self.upper)},
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        n = int(d["num_vars"])

        def mat(a, cols):
            a = np.asarray(a, dtype=float)
            return a.reshape(-1, cols) if a.size else np.zeros((0, cols))

        def bound(a, fill):
            return np.array([fill if v is None else v for v in a], dtype=float)

        obj = d["objective"]
        return cls(
            num_vars=n,
            objective=np.asarray(obj["linear"], float),
            objective_constant=float(obj.get("constant", 0.0)),
            norm_terms=tuple(NormTerm(float(t["weight"]), mat(t["matrix"], n),
                                      np.asarray(t["shift"], float)) for t in obj["norm_terms"]),
            eq_matrix=mat(d["equalities"]["matrix"], n),
            eq_rhs=np.asarray(d["equalities"]["rhs"], float),
            eq_names=tuple(d["equalities"]["names"]),
            ineq_matrix=mat(d["inequalities"]["matrix"], n),
            ineq_rhs=np.asarray(d["inequalities"]["rhs"], float),
            ineq_names=tuple(d["inequalities"]["names"]),
            cones=tuple(SocConstraint(k["name"], np.asarray(k["linear"], float), float(k["offset"]),
                                      float(k["scale"]), mat(k["matrix"], n),
                                      np.asarray(k["shift"], float)) for k in d["cones"]),
            lower=bound(d["bounds"]["lower"], -np.inf),
            upper=bound(d["bounds"]["upper"], np.inf),
            var_names=tuple(d.get("var_names", ())),
            meta=dict(d.get("meta", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        return cls.from_dict(json.loads(text))


def _replace(prog: ConicProgram, **changes) -> ConicProgram:
    fields = dict(num_vars=prog.num_vars, objective=prog.objective, norm_terms=prog.norm_terms,
                  eq_matrix=prog.eq_matrix, eq_rhs=prog.eq_rhs, eq_names=prog.eq_names,
                  ineq_matrix=prog.ineq_matrix, ineq_rhs=prog.ineq_rhs,
                  ineq_names=prog.ineq_names, cones=prog.cones, lower=prog.lower,
                  upper=prog.upper, objective_constant=prog.objective_constant,
                  var_names=prog.var_names, meta=dict(prog.meta))
    fields.update(changes)
    return ConicProgram(**fields)
