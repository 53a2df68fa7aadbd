"""KL confidence transform.

A chance constraint that must hold with probability ``y`` for every law in a
KL ball of radius ``delta`` is equivalent to the same constraint under the
reference law at the tightened level

    chi(y, delta) = inf_{0<x<1} (exp(-delta) x**y - 1) / (x - 1).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .linesearch import bisect_monotone, golden_section


class KLDomainError(ValueError):
    pass


class KLRangeError(ValueError):
    def __init__(self, target, interval):
        self.target = target
        self.interval = interval
        super().__init__(
            f"target {target} outside attainable interval [{interval[0]:.12g}, {interval[1]:.12g}]")


def _u_grid() -> np.ndarray:
    # u = -log(x); dense near x -> 1 (u -> 0) and x -> 0 (u large)
    x_small = np.logspace(-8, -1, 5000)
    x_large = 1.0 - np.logspace(-1, -8, 5000)
    x = np.unique(np.concatenate([x_small, x_large]))
    return np.sort(-np.log(x))


_U = _u_grid()


def _h_of_u(u, y: float, delta: float):
    # h at x = exp(-u), written with expm1 to keep precision near x = 1
    return np.expm1(-delta - y * np.asarray(u)) / np.expm1(-np.asarray(u))


def _check(y: float, delta: float):
    if not (0.0 <= y <= 1.0) or not math.isfinite(y):
        raise KLDomainError(f"confidence {y} outside [0, 1]")
    if not (delta >= 0.0) or not math.isfinite(delta):
        raise KLDomainError(f"radius {delta} must be a finite nonnegative number")


@lru_cache(maxsize=65536)
def _adjust(y: float, delta: float) -> tuple[float, float]:
    # limits at the open ends of (0, 1)
    at_zero = 1.0 if y > 0 else 1.0 - math.exp(-delta)
    at_one = y if delta == 0.0 else math.inf

    vals = _h_of_u(_U, y, delta)
    i = int(np.argmin(vals))
    lo, hi = _U[max(i - 1, 0)], _U[min(i + 1, _U.size - 1)]
    u_star, best = golden_section(lambda u: float(_h_of_u(u, y, delta)), lo, hi, tol=1e-12)
    if vals[i] < best:
        u_star, best = float(_U[i]), float(vals[i])
    x_star = math.exp(-u_star)
    if at_zero <= best:
        best, x_star = at_zero, 0.0
    if at_one <= best:
        best, x_star = at_one, 1.0
    return min(max(best, 0.0), 1.0), x_star


def adjust_confidence(eps: float, delta: float) -> float:
    """Tightened reference-law confidence ``chi(eps, delta)``."""
    eps, delta = float(eps), float(delta)
    _check(eps, delta)
    return _adjust(eps, delta)[0]


def adjust_confidence_argmin(eps: float, delta: float) -> float:
    """Minimizing ``x`` of the transform (0 or 1 when the infimum is a boundary limit)."""
    eps, delta = float(eps), float(delta)
    _check(eps, delta)
    return _adjust(eps, delta)[1]


def kl_ratio(x: float, y: float, delta: float) -> float:
    """``(exp(-delta) x**y - 1) / (x - 1)`` for ``0 < x < 1``."""
    if not 0.0 < x < 1.0:
        raise KLDomainError(f"x = {x} outside (0, 1)")
    return float(_h_of_u(-math.log(x), y, delta))


def adjust_range(delta: float) -> tuple[float, float]:
    """Values of ``chi(., delta)`` at y = 0 and y = 1."""
    return adjust_confidence(0.0, delta), adjust_confidence(1.0, delta)


def is_increasing(delta: float) -> bool:
    """Detected monotonicity direction of ``chi(., delta)`` in y."""
    return adjust_confidence(0.75, delta) >= adjust_confidence(0.25, delta)


def inverse_bracket(target: float, delta: float, tol: float = 1e-9,
                    ytol: float | None = None) -> tuple[float, float, float]:
    """Solve ``chi(y, delta) = target`` by bisection.

    Returns ``(y, y_low, y_high)`` where ``[y_low, y_high]`` brackets the root
    and ``y`` satisfies ``|chi(y) - target| <= tol`` (or the bracket has
    collapsed). With ``ytol`` the search instead stops once the bracket is
    narrower than ``ytol``, which is how a coarse line-search accuracy is set.
    """
    target, delta = float(target), float(delta)
    if not math.isfinite(target):
        raise KLDomainError(f"target {target} is not finite")
    _check(0.5, delta)
    c0, c1 = adjust_range(delta)
    lo_val, hi_val = min(c0, c1), max(c0, c1)
    if target < lo_val - tol or target > hi_val + tol:
        raise KLRangeError(target, (lo_val, hi_val))
    increasing = is_increasing(delta)
    if abs(target - c0) <= tol:
        return 0.0, 0.0, 0.0
    if abs(target - c1) <= tol:
        return 1.0, 1.0, 1.0
    if ytol is None:
        y, a, b = bisect_monotone(lambda v: _adjust(v, delta)[0], target, 0.0, 1.0,
                                  increasing=increasing, ftol=tol)
    else:
        y, a, b = bisect_monotone(lambda v: _adjust(v, delta)[0], target, 0.0, 1.0,
                                  increasing=increasing, ftol=0.0, xtol=ytol)
    return y, min(a, b), max(a, b)


def inverse_adjust(target: float, delta: float, tol: float = 1e-9) -> float:
    """The unique ``y`` in [0, 1] with ``chi(y, delta) = target``.

    For ``delta > 0`` the transform approaches 1 extremely fast as ``y -> 1``
    (``1 - chi(0.99, 0.5)`` is below 1e-20), so the inverse is ill-conditioned
    there: any ``y`` in the flat region reproduces the target.
    """
    return inverse_bracket(target, delta, tol)[0]


__all__ = ["adjust_confidence", "adjust_confidence_argmin", "inverse_adjust",
           "inverse_bracket", "adjust_range", "is_increasing", "kl_ratio",
           "KLDomainError", "KLRangeError"]
