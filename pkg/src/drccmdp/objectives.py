"""Smooth KL-dual objectives over occupation measures.

For a (mixture) reference law of the objective reward,

    f(tau, alpha) = alpha * log sum_j w_j exp(-tau@mu_j / alpha) psi_j(-tau'S_j tau / (2 alpha^2))
                    + alpha * delta,

which is the perspective of ``G(u) = log sum_j w_j exp(a_j(u))`` with
``a_j(u) = -mu_j@u + L_j(u'S_j u / 2)`` and ``L_j(t) = log psi_j(-t)``. For
Gaussian (``L = t``) and Laplace (``L = -log(1 - t)``) components ``G`` is convex,
so ``f`` is jointly convex in ``(tau, alpha)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .distributions import (
    EllipticalLaw, Gaussian, Laplace, UnsupportedGeneratorError, log_generator_neg,
)


@dataclass(frozen=True, eq=False)
class KlDualObjective:
    """``f(tau, alpha)`` for components ``[(weight, law), ...]`` and radius ``delta``.

    With ``alpha=None`` the decision vector is ``x = (tau, alpha)``; otherwise
    ``x = tau`` and alpha is held at the given value.
    """

    components: tuple
    delta: float
    alpha: float | None = None

    def __post_init__(self):
        for _, law in self.components:
            if not isinstance(law.generator, (Gaussian, Laplace)):
                raise UnsupportedGeneratorError(
                    f"{law.generator.name} objective has no convex KL dual in (tau, alpha)")
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def _g(self, u, hessian: bool):
        logs, grads, curv = [], [], []
        for w, law in self.components:
            if w == 0:
                continue
            s = law.dispersion @ u
            t = 0.5 * float(u @ s)
            lg, l1, l2 = (float(v) for v in log_generator_neg(law.generator, t))
            if not math.isfinite(lg):
                return None
            logs.append(math.log(w) - float(law.location @ u) + lg)
            grads.append(-law.location + l1 * s)
            if hessian:
                curv.append(l1 * law.dispersion + l2 * np.outer(s, s))
        logs = np.array(logs)
        G = float(logsumexp(logs))
        p = np.exp(logs - G)
        grads = np.array(grads)
        dG = p @ grads
        if not hessian:
            return G, dG, None
        H = sum(pj * (cj + np.outer(gj, gj)) for pj, cj, gj in zip(p, curv, grads))
        return G, dG, H - np.outer(dG, dG)

    def value(self, tau, alpha: float) -> float:
        """``f(tau, alpha)``; ``+inf`` outside the domain."""
        if alpha <= 0:
            return math.inf
        out = self._g(np.asarray(tau, float) / alpha, False)
        return math.inf if out is None else alpha * (out[0] + self.delta)

    def evaluate(self, x, hessian: bool = False):
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.alpha is not None:
            a = self.alpha
            out = self._g(x / a, hessian)
            if out is None:
                return None
            G, dG, H = out
            f = a * (G + self.delta)
            return (f, dG) if not hessian else (f, dG, H / a)
        tau, a = x[:n], x[n]
        if a <= 0:
            return None
        u = tau / a
        out = self._g(u, hessian)
        if out is None:
            return None
        G, dG, H = out
        f = a * (G + self.delta)
        grad = np.concatenate([dG, [G - dG @ u + self.delta]])
        if not hessian:
            return f, grad
        Hu = H @ u
        full = np.empty((n + 1, n + 1))
        full[:n, :n] = H
        full[:n, n] = full[n, :n] = -Hu
        full[n, n] = u @ Hu
        return f, grad, full / a

    def start(self, program) -> np.ndarray:
        n = self.dim
        tau = np.full(n, 1.0 / n)
        if self.alpha is not None:
            # shrink toward 0 until inside the domain (Laplace needs |u| small)
            while self._g(tau / self.alpha, False) is None:
                tau = tau * 0.5
            return tau
        a = 1.0
        while self._g(tau / a, False) is None:
            a *= 2.0
        return np.concatenate([tau, [a]])


def laplace_domain_rows(components, alpha: float | None, n: int, margin: float = 1e-7):
    """Cone data keeping Laplace components inside ``tau'S tau < 2 alpha^2``.

    Returns ``(linear, offset, matrix)`` triples for ``linear@x + offset >= ||matrix@x||``.
    """
    out = []
    scale = math.sqrt(2.0) * (1.0 - margin)
    for _, law in components:
        if not isinstance(law.generator, Laplace):
            continue
        R = law.sqrt_dispersion()
        if alpha is None:
            lin = np.zeros(n + 1)
            lin[n] = scale
            out.append((lin, 0.0, np.hstack([R, np.zeros((R.shape[0], 1))])))
        else:
            out.append((np.zeros(n), scale * alpha, R))
    return out


def single(law: EllipticalLaw, delta: float, alpha: float | None = None) -> KlDualObjective:
    return KlDualObjective(((1.0, law),), delta, alpha)
