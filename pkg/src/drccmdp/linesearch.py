"""Scalar minimization helpers: golden-section search and grid-then-refine."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section(f: Callable[[float], float], a: float, b: float,
                   tol: float = 1e-10, max_iter: int = 500) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, f(x))`` for the best point seen; the bracket is shrunk until
    its width is at most ``tol``.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)

    c = a + INV_PHI_SQ * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if h <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            h = INV_PHI * h
            c = a + INV_PHI_SQ * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = INV_PHI * h
            d = a + INV_PHI * h
            fd = f(d)
    if fc < fd:
        return c, fc
    return d, fd


def grid_then_golden(f: Callable[[float], float], grid: np.ndarray,
                     tol: float = 1e-10,
                     values: np.ndarray | None = None) -> tuple[float, float]:
    """Minimize ``f`` by scanning a sorted ``grid`` and refining around its argmin.

    ``values`` may carry precomputed ``f(grid)`` (e.g. from a vectorized
    evaluation). Non-finite grid values are treated as ``+inf``.
    """
    grid = np.asarray(grid, dtype=float)
    if values is None:
        values = np.array([f(float(g)) for g in grid])
    values = np.where(np.isfinite(values), values, np.inf)
    i = int(np.argmin(values))
    best_x, best_f = float(grid[i]), float(values[i])
    if not np.isfinite(best_f):
        return best_x, best_f
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    x, fx = golden_section(f, float(lo), float(hi), tol=tol)
    if fx < best_f:
        return x, fx
    return best_x, best_f


def bisect_monotone(f: Callable[[float], float], target: float, lo: float, hi: float,
                    increasing: bool, ftol: float = 1e-9, xtol: float = 1e-15,
                    max_iter: int = 200) -> tuple[float, float, float]:
    """Solve ``f(x) = target`` for monotone ``f`` on ``[lo, hi]``.

    Returns ``(x, a, b)`` where ``[a, b]`` is the final bracket: ``f(a) <= target``
    side first when ``increasing``. Stops when ``|f(x) - target| <= ftol`` (the
    bracket then collapses to ``x``) or the bracket is narrower than ``xtol``.
    """
    a, b = lo, hi
    x = 0.5 * (a + b)
    for _ in range(max_iter):
        x = 0.5 * (a + b)
        fx = f(x)
        if abs(fx - target) <= ftol:
            return x, x, x
        if (b - a) <= xtol:
            break
        below = fx < target
        if below == increasing:
            a = x
        else:
            b = x
    return x, a, b
