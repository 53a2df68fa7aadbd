"""Conic solver backends.

Backends take a :class:`~drccmdp.conic.ConicProgram` and return a
:class:`ConicResult`. The reference backend wraps the cvxopt primal-dual
interior-point method; others register through :func:`register_backend`.

Dual convention: ``duals[name]`` is the nonnegative multiplier of a named
inequality or cone constraint, equal to the rate at which the optimal value
decreases as that constraint's offset (its ``d`` or ``h`` entry) grows. For a
cone built as ``tau@mu - xi >= ...`` it is therefore ``dV/dxi``. Equality duals
follow the backend's sign for ``A x = b``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .conic import ConicProgram

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-limit"
STATUSES = (OPTIMAL, INFEASIBLE, UNBOUNDED, NUMERICAL)


class SolverError(RuntimeError):
    pass


@dataclass
class ConicResult:
    status: str
    x: np.ndarray | None
    objective: float
    duals: dict = field(default_factory=dict)
    residual: float = np.inf
    iterations: int = 0
    backend: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class Capabilities:
    soc: bool = True
    duals: bool = True
    smooth: bool = False
    concurrent: bool = True


class SolverBackend(Protocol):
    name: str
    capabilities: Capabilities

    def solve(self, program: ConicProgram) -> ConicResult: ...


DEFAULT_TOL = {"feastol": 1e-8, "abstol": 1e-8, "reltol": 1e-8}


def _finalize(program: ConicProgram, status: str, x, duals, iterations, backend) -> ConicResult:
    if x is None:
        return ConicResult(status, None, np.nan, {}, np.inf, iterations, backend)
    x = np.asarray(x, dtype=float).reshape(-1)
    return ConicResult(status, x, program.objective_value(x), duals,
                       program.max_residual(x), iterations, backend)


# ---------------------------------------------------------------------------
# cvxopt: standard form  min c'z  s.t.  G z + s = h, s in K,  A z = b


class _CvxoptForm:
    """Lowering of a ConicProgram to cvxopt's cone form.

    Extra epigraph variables are appended for objective norm terms. The
    ``slots`` list remembers where each named inequality/cone lives in ``h``.
    """

    def __init__(self, program: ConicProgram, extra_rows=()):
        n = program.num_vars
        n_t = len(program.norm_terms)
        self.n, self.n_t = n, n_t
        N = n + n_t
        lin_G, lin_h, slots = [], [], []

        def lin(row, rhs, name):
            lin_G.append(np.concatenate([row, np.zeros(N - row.size)]))
            lin_h.append(rhs)
            slots.append(("l", name))

        for i, name in enumerate(program.ineq_names):
            lin(program.ineq_matrix[i], program.ineq_rhs[i], name)
        for j in range(n):
            e = np.zeros(n)
            if np.isfinite(program.lower[j]):
                e[j] = -1.0
                lin(e.copy(), -program.lower[j], f"lb[{j}]")
                e[j] = 0.0
            if np.isfinite(program.upper[j]):
                e[j] = 1.0
                lin(e.copy(), program.upper[j], f"ub[{j}]")
        for row, rhs, name in extra_rows:
            lin(np.asarray(row, float), float(rhs), name)
        soc_blocks = []
        for k in program.cones:
            if k.scale == 0.0 or k.matrix.shape[0] == 0:
                lin(-k.linear, k.offset, k.name)
                continue
            Gk = np.zeros((1 + k.matrix.shape[0], N))
            Gk[0, :n] = -k.linear
            Gk[1:, :n] = -k.scale * k.matrix
            hk = np.concatenate([[k.offset], k.scale * k.shift])
            soc_blocks.append((Gk, hk, k.name))
        for i, t in enumerate(program.norm_terms):
            Gk = np.zeros((1 + t.matrix.shape[0], N))
            Gk[0, n + i] = -1.0
            Gk[1:, :n] = -t.matrix
            hk = np.concatenate([[0.0], t.shift])
            soc_blocks.append((Gk, hk, None))

        self.n_lin = len(lin_G)
        self.lin_slots = slots
        G_parts = [np.array(lin_G).reshape(-1, N)] + [b[0] for b in soc_blocks]
        h_parts = [np.array(lin_h)] + [b[1] for b in soc_blocks]
        self.G = np.vstack(G_parts)
        self.h = np.concatenate(h_parts)
        self.dims = {"l": self.n_lin, "q": [b[0].shape[0] for b in soc_blocks], "s": []}
        self.soc_names = [b[2] for b in soc_blocks]
        self.c = np.concatenate([program.objective,
                                 [t.weight for t in program.norm_terms]])
        self.A = np.hstack([program.eq_matrix, np.zeros((program.eq_matrix.shape[0], n_t))])
        self.b = program.eq_rhs
        self.eq_names = program.eq_names

    def start_point(self, x):
        t = np.zeros(self.n_t)
        return np.concatenate([x, t])

    def duals(self, z, y) -> dict:
        z = np.asarray(z).reshape(-1)
        out = {}
        for i, (_, name) in enumerate(self.lin_slots):
            out[name] = float(z[i])
        pos = self.n_lin
        for size, name in zip(self.dims["q"], self.soc_names):
            if name is not None:
                out[name] = float(z[pos])
                out[name + "#cone"] = z[pos:pos + size].copy()
            pos += size
        if y is not None:
            y = np.asarray(y).reshape(-1)
            for i, name in enumerate(self.eq_names):
                out[name] = float(y[i])
        return out


def _cvxopt_status(s: str) -> str:
    return {"optimal": OPTIMAL, "primal infeasible": INFEASIBLE,
            "dual infeasible": UNBOUNDED}.get(s, NUMERICAL)


class CvxoptBackend:
    """Reference backend: cvxopt ``conelp`` (Nesterov-Todd primal-dual interior point)."""

    name = "cvxopt"
    capabilities = Capabilities(soc=True, duals=True, smooth=True, concurrent=True)

    def __init__(self, feastol=1e-8, abstol=1e-8, reltol=1e-8, maxiters=200):
        self.options = {"feastol": feastol, "abstol": abstol, "reltol": reltol,
                        "maxiters": maxiters, "show_progress": False}

    def solve(self, program: ConicProgram) -> ConicResult:
        from cvxopt import matrix, solvers

        form = _CvxoptForm(program)
        args = dict(c=matrix(form.c), G=matrix(form.G), h=matrix(form.h), dims=form.dims)
        if form.A.shape[0]:
            args.update(A=matrix(form.A), b=matrix(form.b))
        try:
            sol = solvers.conelp(options=self.options, **args)
        except (ValueError, ArithmeticError) as exc:
            log.warning("cvxopt conelp failed: %s", exc)
            return ConicResult(NUMERICAL, None, np.nan, backend=self.name)
        status = _cvxopt_status(sol["status"])
        if status != OPTIMAL:
            x = None if sol["x"] is None or status != NUMERICAL else np.array(sol["x"]).ravel()[:form.n]
            return _finalize(program, status, x, {}, sol.get("iterations", 0), self.name)
        x = np.array(sol["x"]).ravel()[:form.n]
        duals = form.duals(sol["z"], sol["y"] if form.A.shape[0] else None)
        return _finalize(program, status, x, duals, sol.get("iterations", 0), self.name)

    def solve_smooth(self, program: ConicProgram, objective: "SmoothObjective",
                     extra_rows=()) -> ConicResult:
        """Minimize ``objective(x) + program objective`` over the program's constraints."""
        from cvxopt import matrix, solvers

        form = _CvxoptForm(program, extra_rows)
        n = form.n
        c = form.c
        x0 = form.start_point(objective.start(program))

        def F(x=None, z=None):
            if x is None:
                return 0, matrix(x0)
            xv = np.array(x).ravel()
            res = objective.evaluate(xv[:n], hessian=z is not None)
            if res is None:
                return None
            f, g = res[0], res[1]
            f = f + float(c @ xv)
            grad = np.concatenate([g, np.zeros(form.n_t)]) + c
            if z is None:
                return matrix(f), matrix(grad.reshape(1, -1))
            H = np.zeros((xv.size, xv.size))
            H[:n, :n] = res[2]
            return matrix(f), matrix(grad.reshape(1, -1)), matrix(float(z[0]) * H)

        args = dict(G=matrix(form.G), h=matrix(form.h), dims=form.dims)
        if form.A.shape[0]:
            args.update(A=matrix(form.A), b=matrix(form.b))
        try:
            sol = solvers.cp(F, options=self.options, **args)
        except (ValueError, ArithmeticError) as exc:
            log.warning("cvxopt cp failed: %s", exc)
            return ConicResult(NUMERICAL, None, np.nan, backend=self.name)
        status = _cvxopt_status(sol["status"])
        x = np.array(sol["x"]).ravel()[:n] if sol["x"] is not None else None
        duals = form.duals(sol["zl"], sol["y"] if form.A.shape[0] else None) if status == OPTIMAL else {}
        res = _finalize(program, status, x, duals, sol.get("iterations", 0), self.name)
        if x is not None:
            val = objective.evaluate(x, hessian=False)
            res.objective = (val[0] if val is not None else np.inf) + program.objective_value(x)
        return res


class SmoothObjective(Protocol):
    """Convex, twice-differentiable objective on an open domain."""

    def evaluate(self, x: np.ndarray, hessian: bool) -> tuple | None:
        """``(f, grad)`` or ``(f, grad, hess)``; ``None`` outside the domain."""

    def start(self, program: ConicProgram) -> np.ndarray:
        """A point in the domain (need not satisfy the program's constraints)."""


# ---------------------------------------------------------------------------
# cvxpy plug-in


class CvxpyBackend:
    """Plug-in backend through cvxpy (default solver Clarabel)."""

    name = "cvxpy"
    capabilities = Capabilities(soc=True, duals=True, smooth=False, concurrent=True)

    def __init__(self, solver: str = "CLARABEL", **solver_kw):
        self.solver = solver
        self.solver_kw = solver_kw

    def solve(self, program: ConicProgram) -> ConicResult:
        import cvxpy as cp

        n = program.num_vars
        x = cp.Variable(n)
        named = {}
        cons = []
        if program.eq_rhs.size:
            c = program.eq_matrix @ x == program.eq_rhs
            cons.append(c)
            named["__eq__"] = c
        for i, name in enumerate(program.ineq_names):
            c = program.ineq_matrix[i] @ x <= program.ineq_rhs[i]
            cons.append(c)
            named[name] = c
        for k in program.cones:
            lhs = k.linear @ x + k.offset
            if k.scale == 0.0 or k.matrix.shape[0] == 0:
                c = 0 <= lhs
            else:
                c = k.scale * cp.norm(k.matrix @ x + k.shift, 2) <= lhs
            cons.append(c)
            named[k.name] = c
        fin_lo = np.isfinite(program.lower)
        fin_hi = np.isfinite(program.upper)
        if fin_lo.any():
            c = x[fin_lo] >= program.lower[fin_lo]
            cons.append(c)
            named["__lb__"] = (c, np.flatnonzero(fin_lo))
        if fin_hi.any():
            c = x[fin_hi] <= program.upper[fin_hi]
            cons.append(c)
            named["__ub__"] = (c, np.flatnonzero(fin_hi))
        obj = program.objective @ x + program.objective_constant
        for t in program.norm_terms:
            obj = obj + t.weight * cp.norm(t.matrix @ x + t.shift, 2)
        prob = cp.Problem(cp.Minimize(obj), cons)
        try:
            prob.solve(solver=self.solver, **self.solver_kw)
        except cp.error.SolverError as exc:
            log.warning("cvxpy solve failed: %s", exc)
            return ConicResult(NUMERICAL, None, np.nan, backend=self.name)
        status = {cp.OPTIMAL: OPTIMAL, cp.INFEASIBLE: INFEASIBLE,
                  cp.UNBOUNDED: UNBOUNDED}.get(prob.status, NUMERICAL)
        if status != OPTIMAL:
            return ConicResult(status, None, np.nan, backend=self.name)
        duals = {}
        for name, c in named.items():
            if name == "__eq__":
                for i, en in enumerate(program.eq_names):
                    duals[en] = float(np.ravel(c.dual_value)[i])
            elif name in ("__lb__", "__ub__"):
                con, idx = c
                tag = "lb" if name == "__lb__" else "ub"
                for v, j in zip(np.ravel(con.dual_value), idx):
                    duals[f"{tag}[{j}]"] = float(v)
            else:
                duals[name] = float(np.ravel(c.dual_value)[0])
        return _finalize(program, status, x.value, duals, 0, self.name)


# ---------------------------------------------------------------------------
# registry and entry points

_BACKENDS: dict[str, Callable[[], SolverBackend]] = {
    "cvxopt": CvxoptBackend,
    "cvxpy": CvxpyBackend,
}


def register_backend(name: str, factory: Callable[[], SolverBackend]) -> None:
    _BACKENDS[name] = factory


def get_backend(backend: str | SolverBackend | None = None) -> SolverBackend:
    if backend is None:
        backend = "cvxopt"
    if isinstance(backend, str):
        try:
            return _BACKENDS[backend]()
        except KeyError:
            raise SolverError(f"unknown backend {backend!r}; known: {sorted(_BACKENDS)}") from None
    return backend


def conic_solve(program: ConicProgram, backend: str | SolverBackend | None = None) -> ConicResult:
    """Solve a conic program; never reports a numerical-limit result as optimal."""
    be = get_backend(backend)
    res = be.solve(program)
    if res.status not in STATUSES:
        raise SolverError(f"backend {be.name} returned unknown status {res.status!r}")
    return res


def cone_sensitivity(program: ConicProgram, name: str, base: ConicResult,
                     backend: SolverBackend, step: float = 1e-5) -> float:
    """Finite-difference multiplier of a named cone: ``-(V(d + step) - V(d)) / step``.

    Used when a backend returns no certificates. With ``d = -xi`` this equals
    ``dV/dxi``.
    """
    bumped = backend.solve(program.with_cone_offset(name, -step))
    if not bumped.ok:
        raise SolverError(f"sensitivity solve for {name!r} ended with {bumped.status}")
    return (bumped.objective - base.objective) / step


def multipliers(program: ConicProgram, result: ConicResult, names,
                backend: str | SolverBackend | None = None) -> np.ndarray:
    """Multipliers for the named cones, from certificates or finite differences."""
    be = get_backend(backend)
    out = []
    for name in names:
        if be.capabilities.duals and name in result.duals:
            out.append(max(result.duals[name], 0.0))
        else:
            out.append(max(cone_sensitivity(program, name, result, be), 0.0))
    return np.array(out)
