"""Elliptical and elliptical-mixture reference laws.

Covers characteristic generators, standardized 1-D CDFs and quantiles, the
mean of log-elliptical variables, and the KL worst-case expectation of a
linear reward ``tau @ r`` under a ball centered at an elliptical law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .linesearch import golden_section, grid_then_golden


class DistributionError(ValueError):
    """Invalid distribution parameters or an operation outside a law's domain."""


class UnsupportedGeneratorError(DistributionError):
    pass


class DivergentMeanError(DistributionError):
    pass


class AssumptionError(DistributionError):
    """A precondition of the KL worst-case reformulation does not hold."""


@dataclass(frozen=True)
class Gaussian:
    name = "gaussian"


@dataclass(frozen=True)
class Laplace:
    name = "laplace"


@dataclass(frozen=True)
class GeneralizedStable:
    omega1: float
    omega2: float
    name = "generalized_stable"

    def __post_init__(self):
        if not (self.omega1 > 0 and self.omega2 > 0):
            raise DistributionError("generalized stable parameters must be positive")


GeneratorTag = Union[Gaussian, Laplace, GeneralizedStable]

GAUSSIAN = Gaussian()
LAPLACE = Laplace()


def generator_from_dict(d: dict) -> GeneratorTag:
    kind = d.get("kind", "gaussian") if isinstance(d, dict) else d
    if kind == "gaussian":
        return GAUSSIAN
    if kind == "laplace":
        return LAPLACE
    if kind == "generalized_stable":
        return GeneralizedStable(float(d["omega1"]), float(d["omega2"]))
    raise DistributionError(f"unknown generator kind {kind!r}")


def generator_to_dict(gen: GeneratorTag) -> dict:
    if isinstance(gen, GeneralizedStable):
        return {"kind": gen.name, "omega1": gen.omega1, "omega2": gen.omega2}
    return {"kind": gen.name}


def generator_value(gen: GeneratorTag, t: float) -> float:
    """Characteristic generator psi(t)."""
    if isinstance(gen, Gaussian):
        return math.exp(-t)
    if isinstance(gen, Laplace):
        if t == -1.0:
            raise DistributionError("Laplace generator is singular at t = -1")
        return 1.0 / (1.0 + t)
    if isinstance(gen, GeneralizedStable):
        if t < 0:
            raise DistributionError("generalized stable generator undefined for t < 0")
        return math.exp(-gen.omega1 * t ** (gen.omega2 / 2.0))
    raise UnsupportedGeneratorError(f"unknown generator {gen!r}")


def log_generator_neg(gen: GeneratorTag, t):
    """``log psi(-t)`` for ``t >= 0`` (vectorized), with its first two derivatives.

    Returns ``(value, d1, d2)``. Outside the generator's domain the value is
    ``+inf``. Only Gaussian and Laplace extend to negative arguments.
    """
    t = np.asarray(t, dtype=float)
    if isinstance(gen, Gaussian):
        return t, np.ones_like(t), np.zeros_like(t)
    if isinstance(gen, Laplace):
        with np.errstate(divide="ignore", invalid="ignore"):
            one_minus = 1.0 - t
            ok = one_minus > 0
            val = np.where(ok, -np.log(np.where(ok, one_minus, 1.0)), np.inf)
            d1 = np.where(ok, 1.0 / np.where(ok, one_minus, 1.0), np.inf)
        return val, d1, d1 * d1
    raise UnsupportedGeneratorError(
        f"{gen.name} generator is not defined at negative arguments")


def generator_inf_nonpositive(gen: GeneratorTag) -> float:
    """Infimum of psi over the part of ``t <= 0`` where psi is a valid generator value.

    Gaussian: ``exp(-t) >= 1``. Laplace: ``1/(1+t) >= 1`` on ``(-1, 0]``, the
    range where ``E exp(.)`` is finite.
    """
    if isinstance(gen, (Gaussian, Laplace)):
        return 1.0
    raise UnsupportedGeneratorError(
        f"{gen.name} generator is not defined at negative arguments")


# ---------------------------------------------------------------------------
# Laws


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return np.diag(a)
    return a


@dataclass(frozen=True, eq=False)
class EllipticalLaw:
    location: np.ndarray
    dispersion: np.ndarray
    generator: GeneratorTag = GAUSSIAN

    def __post_init__(self):
        mu = np.asarray(self.location, dtype=float).reshape(-1)
        sigma = _as_matrix(self.dispersion)
        if sigma.shape != (mu.size, mu.size):
            raise DistributionError(
                f"dispersion shape {sigma.shape} does not match location length {mu.size}")
        if not np.allclose(sigma, sigma.T, atol=1e-12, rtol=0):
            raise DistributionError("dispersion matrix is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        eig_min = np.linalg.eigvalsh(sigma).min() if mu.size else 0.0
        if eig_min < -1e-10 * max(1.0, np.abs(sigma).max()):
            raise DistributionError("dispersion matrix is not positive semidefinite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "location", mu)
        object.__setattr__(self, "dispersion", sigma)

    @property
    def dim(self) -> int:
        return self.location.size

    def is_positive_definite(self) -> bool:
        try:
            np.linalg.cholesky(self.dispersion)
        except np.linalg.LinAlgError:
            return False
        return True

    def sqrt_dispersion(self) -> np.ndarray:
        """A factor ``R`` with ``R.T @ R == dispersion`` (so ``|R x| = sqrt(x' S x)``)."""
        try:
            return np.linalg.cholesky(self.dispersion).T
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(self.dispersion)
            return (v * np.sqrt(np.clip(w, 0.0, None))).T

    def to_dict(self) -> dict:
        sigma = self.dispersion
        if np.count_nonzero(sigma - np.diag(np.diag(sigma))) == 0:
            disp = {"diag": np.diag(sigma).tolist()}
        else:
            disp = {"matrix": sigma.tolist()}
        return {"location": self.location.tolist(), "dispersion": disp,
                "generator": generator_to_dict(self.generator)}

    @classmethod
    def from_dict(cls, d: dict) -> "EllipticalLaw":
        disp = d["dispersion"]
        if isinstance(disp, dict):
            sigma = np.diag(disp["diag"]) if "diag" in disp else np.asarray(disp["matrix"])
        else:
            sigma = np.asarray(disp)
        return cls(np.asarray(d["location"], float), sigma,
                   generator_from_dict(d.get("generator", "gaussian")))


@dataclass(frozen=True, eq=False)
class MixtureLaw:
    weights: np.ndarray
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        comps = tuple(self.components)
        if len(comps) == 0 or len(comps) != w.size:
            raise DistributionError("mixture needs one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DistributionError("mixture weights must be nonnegative and sum to 1")
        if len({c.dim for c in comps}) != 1:
            raise DistributionError("mixture components must share a dimension")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def __len__(self) -> int:
        return len(self.components)

    @classmethod
    def single(cls, law: EllipticalLaw) -> "MixtureLaw":
        return cls(np.array([1.0]), (law,))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureLaw":
        return cls(np.asarray(d["weights"], float),
                   tuple(EllipticalLaw.from_dict(c) for c in d["components"]))


# ---------------------------------------------------------------------------
# Standardized 1-D CDF and quantile

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _check_cdf_generator(gen: GeneratorTag):
    if not isinstance(gen, (Gaussian, Laplace)):
        raise UnsupportedGeneratorError(
            f"no tractable CDF for the {getattr(gen, 'name', gen)} generator")


def std_cdf(gen: GeneratorTag, z: float) -> float:
    """CDF of ``Z ~ E_1(0, 1, psi)``.

    Laplace uses the unit-scale density ``exp(-|z|) / 2``. Note that the
    moment formulas (``log_elliptical_mean``, the KL dual) evaluate
    ``psi(-sigma2 / 2)`` with ``psi(t) = 1 / (1 + t)``, which corresponds to
    scale ``1 / sqrt(2)``; the two Laplace conventions are kept as specified.
    """
    _check_cdf_generator(gen)
    if isinstance(gen, Gaussian):
        return 0.5 * math.erfc(-z / _SQRT2)
    if z < 0:
        return 0.5 * math.exp(z)
    return 1.0 - 0.5 * math.exp(-z)


def std_pdf(gen: GeneratorTag, z: float) -> float:
    _check_cdf_generator(gen)
    if isinstance(gen, Gaussian):
        return math.exp(-0.5 * z * z) / _SQRT2PI
    return 0.5 * math.exp(-abs(z))


def std_upper_tail(gen: GeneratorTag, z: float) -> float:
    """``1 - std_cdf(z)`` without cancellation."""
    return std_cdf(gen, -z)


# rational approximation coefficients for the normal tail quantile
_AS_NUM = (2.515517, 0.802853, 0.010328)
_AS_DEN = (1.432788, 0.189269, 0.001308)


def gaussian_quantile_rational(p: float) -> float:
    """Normal quantile from the three-term rational tail approximation (|err| < 4.5e-4)."""
    if not 0.0 < p < 1.0:
        raise DistributionError(f"probability {p} outside (0, 1)")
    tail = min(p, 1.0 - p)
    t = math.sqrt(-2.0 * math.log(tail))
    num = _AS_NUM[0] + _AS_NUM[1] * t + _AS_NUM[2] * t * t
    den = 1.0 + _AS_DEN[0] * t + _AS_DEN[1] * t * t + _AS_DEN[2] * t ** 3
    upper = t - num / den
    return -upper if p < 0.5 else upper


def _gaussian_quantile_bisect(p: float, tol: float = 1e-15) -> float:
    # z(p) = -z(1-p); bisect on the lower half where erfc is accurate
    if p > 0.5:
        return -_gaussian_quantile_bisect(1.0 - p, tol)
    if p == 0.5:
        return 0.0
    lo, hi = -40.0, 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_cdf(GAUSSIAN, mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def std_quantile(gen: GeneratorTag, p: float, method: str = "bisect") -> float:
    """Inverse of :func:`std_cdf`.

    ``method`` selects the Gaussian routine: ``"bisect"`` (default, accurate to
    machine precision) or ``"rational"`` (tail approximation).
    """
    if not 0.0 < p < 1.0:
        raise DistributionError(f"probability {p} outside (0, 1)")
    _check_cdf_generator(gen)
    if isinstance(gen, Gaussian):
        if method == "rational":
            return gaussian_quantile_rational(p)
        if method != "bisect":
            raise ValueError(f"unknown quantile method {method!r}")
        return _gaussian_quantile_bisect(p)
    if p < 0.5:
        return math.log(2.0 * p)
    return -math.log(2.0 * (1.0 - p))


def std_quantile_derivative(gen: GeneratorTag, p: float) -> float:
    """Derivative of the standardized quantile, ``1 / pdf(quantile(p))``."""
    z = std_quantile(gen, p)
    return 1.0 / std_pdf(gen, z)


# ---------------------------------------------------------------------------
# Moments and worst-case expectation


def log_elliptical_mean(mu: float, sigma2: float, gen: GeneratorTag) -> float:
    """Mean of ``exp(X)`` for ``X ~ E_1(mu, sigma2, psi)``: ``exp(mu) * psi(-sigma2/2)``."""
    if sigma2 < 0:
        raise DistributionError("variance must be nonnegative")
    if isinstance(gen, Laplace) and sigma2 >= 2.0:
        raise DivergentMeanError(
            f"log-Laplace mean diverges for dispersion {sigma2} >= 2")
    if isinstance(gen, GeneralizedStable) and sigma2 > 0:
        raise UnsupportedGeneratorError(
            "generalized stable generator is not defined at negative arguments")
    return math.exp(mu) * generator_value(gen, -0.5 * sigma2)


def linear_image_params(law: EllipticalLaw, a) -> tuple[float, float, GeneratorTag]:
    """1-D parameters of ``a @ X`` for ``X ~ law``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != law.dim:
        raise DistributionError(f"vector length {a.size} != law dimension {law.dim}")
    return float(a @ law.location), float(a @ law.dispersion @ a), law.generator


ALPHA_GRID = np.logspace(-6, 6, 200)


def kl_dual_objective(alpha, mean: float, var: float, gen: GeneratorTag, delta: float):
    """``-mean + alpha * log psi(-var / (2 alpha^2)) + alpha * delta`` (vectorized in alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = var / (2.0 * alpha * alpha)
        lg, _, _ = log_generator_neg(gen, t)
        val = -mean + alpha * lg + alpha * delta
    return np.where(alpha > 0, val, np.inf)


def worst_case_expectation(tau, law: EllipticalLaw, delta: float,
                           method: str = "auto") -> tuple[float, float]:
    """Worst-case ``E[tau @ r]`` over the KL ball of radius ``delta`` around ``law``.

    Returns ``(value, alpha_star)``. The Gaussian case uses the closed form
    ``tau@mu - sqrt(2 delta tau'S tau)``; otherwise (or with ``method="grid"``)
    the dual is minimized over alpha on a log grid with golden-section refinement.
    ``alpha_star`` is ``inf`` when the infimum is the alpha -> infinity limit.
    """
    if delta < 0:
        raise DistributionError("radius must be nonnegative")
    gen = law.generator
    if generator_inf_nonpositive(gen) < math.exp(-delta):
        raise AssumptionError("inf_{t<=0} psi(t) >= exp(-delta) fails")
    if not law.is_positive_definite():
        raise AssumptionError("dispersion must be positive definite")
    mean, var, _ = linear_image_params(law, tau)
    if delta == 0.0:
        return mean, math.inf
    if var <= 0.0:
        return mean, 0.0
    if method == "auto" and isinstance(gen, Gaussian):
        return mean - math.sqrt(2.0 * delta * var), math.sqrt(var / (2.0 * delta))
    if method not in ("auto", "grid"):
        raise ValueError(f"unknown method {method!r}")

    def g(a: float) -> float:
        return float(kl_dual_objective(a, mean, var, gen, delta))

    alpha, best = grid_then_golden(g, ALPHA_GRID, tol=1e-10,
                                   values=kl_dual_objective(ALPHA_GRID, mean, var, gen, delta))
    # relative refinement: the grid bracket may be wide in absolute terms
    if np.isfinite(best):
        x, fx = golden_section(lambda la: g(math.exp(la)), math.log(alpha) - 0.1,
                               math.log(alpha) + 0.1, tol=1e-12)
        if fx < best:
            alpha, best = math.exp(x), fx
    return -best, alpha


__all__ = [
    "Gaussian", "Laplace", "GeneralizedStable", "GAUSSIAN", "LAPLACE",
    "EllipticalLaw", "MixtureLaw", "generator_value", "std_cdf", "std_quantile",
    "std_quantile_derivative", "gaussian_quantile_rational", "log_elliptical_mean",
    "worst_case_expectation", "linear_image_params", "DistributionError",
    "AssumptionError", "DivergentMeanError", "UnsupportedGeneratorError",
]
