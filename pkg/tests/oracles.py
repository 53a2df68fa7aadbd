"""Independent reference computations for the test-suite.

Nothing here calls into the package's numerical routines: CDFs come from a
Taylor series in extended precision, the KL transform from a dense grid plus
scipy's bounded minimizer, occupation measures from a direct linear solve, and
probabilities from simulation.
"""
from __future__ import annotations

import itertools
import math

import mpmath as mp
import numpy as np
from scipy.optimize import minimize_scalar


# ---------------------------------------------------------------------------
# standard normal CDF by its Taylor series (50 digits)


def normal_cdf_series(z: float) -> float:
    with mp.workdps(60):
        z = mp.mpf(z)
        term = z
        total = z
        n = 0
        while True:
            n += 1
            term *= -z * z / (2 * n)
            add = term / (2 * n + 1)
            total += add
            if abs(add) < mp.mpf(10) ** -55 * max(1, abs(total)):
                break
        return float(mp.mpf("0.5") + total / mp.sqrt(2 * mp.pi))


def normal_quantile_bisect(p: float) -> float:
    lo, hi = -12.0, 12.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf_series(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# KL transform by brute force


def _h(e, y, delta):
    # h at x = 1 - e, evaluated without cancellation for small e
    e = np.asarray(e, dtype=float)
    return -np.expm1(-delta + y * np.log1p(-e)) / e


def chi_bruteforce(y: float, delta: float, points: int = 200_000) -> float:
    """``inf_{0<x<1} h(x)`` on a dense mixed grid in ``e = 1 - x``, refined by a
    bounded scalar search, with the analytic limits at x -> 0 and x -> 1 included."""
    e = np.unique(np.concatenate([np.logspace(-14, -0.3, points),
                                  1.0 - np.logspace(-12, -0.3, points)]))
    e = e[(e > 0) & (e < 1)]
    vals = _h(e, y, delta)
    i = int(np.argmin(vals))
    best = float(vals[i])
    lo, hi = e[max(i - 1, 0)], e[min(i + 1, e.size - 1)]
    if hi > lo:
        r = minimize_scalar(lambda t: float(_h(t, y, delta)), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-15})
        best = min(best, float(r.fun))
    limit0 = 1.0 if y > 0 else 1.0 - math.exp(-delta)
    limit1 = y if delta == 0 else math.inf
    return min(max(min(best, limit0, limit1), 0.0), 1.0)


class ChiTable:
    """Tabulated brute-force transform with a monotone interpolated inverse."""

    def __init__(self, delta: float, points: int = 2001):
        self.delta = delta
        self.y = np.linspace(0.0, 1.0, points)
        self.chi = np.array([chi_bruteforce(v, delta, points=20_000) for v in self.y])

    def inverse(self, target):
        """Largest tabulated-interpolated y with chi(y) <= target (nan if none)."""
        target = np.asarray(target, dtype=float)
        out = np.interp(target, self.chi, self.y)
        out = np.where(target < self.chi[0], np.nan, out)
        return np.where(target >= self.chi[-1], 1.0, out)


# ---------------------------------------------------------------------------
# MDP oracles


def occupation_of_policy(P, q, beta, policy):
    """State-major occupation measure of a stationary policy ``policy[s, a]``."""
    n_s, n_a, _ = P.shape
    P_pi = np.einsum("sa,sat->st", policy, P)
    d = np.linalg.solve(np.eye(n_s) - beta * P_pi.T, (1 - beta) * q)
    return (d[:, None] * policy).reshape(-1)


def deterministic_occupations(P, q, beta):
    """Occupation measures of all deterministic stationary policies (polytope vertices)."""
    n_s, n_a, _ = P.shape
    out = []
    for acts in itertools.product(range(n_a), repeat=n_s):
        pol = np.zeros((n_s, n_a))
        pol[np.arange(n_s), acts] = 1.0
        out.append(occupation_of_policy(P, q, beta, pol))
    return np.array(out)


def two_state_policy_grid(P, q, beta, n: int = 201, lo=(0.0, 0.0), hi=(1.0, 1.0)):
    """Occupation measures for a grid of 2-state/2-action policies ``(f(0), f(1))``,
    where ``f(s)`` is the probability of action 0 in state ``s``."""
    F0, F1 = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n),
                         indexing="ij")
    f = np.stack([F0.ravel(), F1.ravel()], axis=1)
    pol = np.stack([f, 1 - f], axis=2)                          # (m, s, a)
    P_pi = np.einsum("msa,sat->mst", pol, P)
    M = np.eye(2)[None] - beta * np.transpose(P_pi, (0, 2, 1))
    rhs = np.broadcast_to((1 - beta) * np.asarray(q, float), (f.shape[0], 2))
    d = np.linalg.solve(M, rhs[..., None])[..., 0]
    taus = (d[:, :, None] * pol).reshape(f.shape[0], 4)
    return taus, f[:, 0], f[:, 1]


def simulate_discounted_reward(P, q, beta, policy, reward_mean, horizon, episodes, rng):
    """Monte Carlo mean and standard error of ``sum_t beta^t r(s_t, a_t)``."""
    n_s, n_a, _ = P.shape
    R = reward_mean.reshape(n_s, n_a)
    cumP = np.cumsum(P, axis=2)
    cumpol = np.cumsum(policy, axis=1)
    s = rng.choice(n_s, size=episodes, p=q)
    total = np.zeros(episodes)
    disc = 1.0
    for _ in range(horizon):
        a = (rng.random(episodes)[:, None] > cumpol[s]).sum(axis=1)
        a = np.minimum(a, n_a - 1)
        total += disc * R[s, a]
        u = rng.random(episodes)
        s = np.minimum((u[:, None] > cumP[s, a]).sum(axis=1), n_s - 1)
        disc *= beta
    return total.mean(), total.std(ddof=1) / math.sqrt(episodes)


def simulate_occupation(P, q, beta, policy, horizon, episodes, rng):
    """Empirical ``(1 - beta) sum_t beta^t 1{s_t = s, a_t = a}`` (state-major)."""
    n_s, n_a, _ = P.shape
    cumP = np.cumsum(P, axis=2)
    cumpol = np.cumsum(policy, axis=1)
    s = rng.choice(n_s, size=episodes, p=q)
    occ = np.zeros(n_s * n_a)
    disc = 1.0
    for _ in range(horizon):
        a = np.minimum((rng.random(episodes)[:, None] > cumpol[s]).sum(axis=1), n_a - 1)
        np.add.at(occ, s * n_a + a, disc)
        u = rng.random(episodes)
        s = np.minimum((u[:, None] > cumP[s, a]).sum(axis=1), n_s - 1)
        disc *= beta
    return (1 - beta) * occ / episodes


# ---------------------------------------------------------------------------
# KL dual by brute force over alpha


def kl_dual_bruteforce(mean: float, var: float, delta: float, log_psi_neg, points=20_000):
    """``min_alpha -mean + alpha log psi(-var / 2 alpha^2) + alpha delta`` on a dense
    log grid refined by a bounded search in log(alpha). Returns the worst-case mean."""
    la = np.linspace(math.log(1e-7), math.log(1e7), points)
    a = np.exp(la)
    with np.errstate(all="ignore"):
        g = -mean + a * log_psi_neg(var / (2 * a * a)) + a * delta
    g = np.where(np.isfinite(g), g, np.inf)
    i = int(np.argmin(g))
    lo, hi = la[max(i - 1, 0)], la[min(i + 1, la.size - 1)]

    def f(t):
        al = math.exp(t)
        v = -mean + al * float(log_psi_neg(var / (2 * al * al))) + al * delta
        return v if math.isfinite(v) else math.inf

    r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return -min(float(g[i]), float(r.fun))


def gaussian_log_psi_neg(t):
    return np.asarray(t, dtype=float)


def laplace_log_psi_neg(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        return np.where(t < 1, -np.log1p(-np.minimum(t, 1 - 1e-300)), np.inf)


# ---------------------------------------------------------------------------
# nominal chance-constrained MDP written directly in cvxpy


def nominal_ccmdp(P, q, beta, mu0, var0, constraints, radius0=0.0):
    """``min -tau@mu0 + sqrt(2 radius0) ||diag(var0)^(1/2) tau||`` over the occupation
    polytope with Gaussian constraints ``(mu, var, xi, level)``:
    ``tau@mu + Phi^{-1}(1 - level) ||diag(var)^(1/2) tau|| >= xi``.
    Returns ``(value, tau)``; ``value`` is ``inf`` when infeasible."""
    import cvxpy as cp
    from scipy.stats import norm

    n_s, n_a, _ = P.shape
    tau = cp.Variable(n_s * n_a, nonneg=True)
    cons = []
    for s2 in range(n_s):
        row = np.zeros(n_s * n_a)
        for s in range(n_s):
            for a in range(n_a):
                row[s * n_a + a] = (s == s2) - beta * P[s, a, s2]
        cons.append(row @ tau == (1 - beta) * q[s2])
    for mu, var, xi, level in constraints:
        z = norm.ppf(1 - level)
        cons.append(mu @ tau + z * cp.norm(cp.multiply(np.sqrt(var), tau)) >= xi)
    obj = -mu0 @ tau + math.sqrt(2 * radius0) * cp.norm(cp.multiply(np.sqrt(var0), tau))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL")
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return math.inf, None
    return float(prob.value), np.asarray(tau.value)


def nominal_joint_ccmdp(P, q, beta, mu0, var0, laws, xi, eps_hat):
    """Global optimum of the two-constraint nominal joint program with independent
    rewards: levels ``(y1, eps_hat / y1)``, searched over ``y1`` in log(1 - y1)."""
    (mu1, v1), (mu2, v2) = laws

    def f(t):
        y1 = 1.0 - math.exp(t)
        y2 = eps_hat / y1
        if y2 > 1:
            return math.inf
        val, _ = nominal_ccmdp(P, q, beta, mu0, var0, [(mu1, v1, xi, y1), (mu2, v2, xi, y2)])
        return val

    hi = math.log(1.0 - eps_hat) - 1e-12
    ts = np.linspace(math.log(1e-9), hi, 41)
    vals = np.array([f(t) for t in ts])
    i = int(np.argmin(vals))
    r = minimize_scalar(f, bounds=(ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]),
                        method="bounded", options={"xatol": 1e-8})
    if r.fun < vals[i]:
        return float(r.fun), 1.0 - math.exp(r.x)
    return float(vals[i]), 1.0 - math.exp(ts[i])
