"""Scalar special functions and the elliptical mixing families.

The heavy lifting (erfc, incomplete beta, Bessel K, log-gamma) is delegated
to :mod:`scipy.special`; this module fixes the conventions the band formulas
rely on and adds the quantile solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special as sc

from ffband.errors import DomainError

__all__ = [
    "EllipticalFamily",
    "bessel_k",
    "gamma_fn",
    "log_gamma",
    "mgf_V",
    "mgf_V_deriv",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "student_t_cdf",
    "student_t_pdf",
    "student_t_quantile",
]

_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(x):
    """Standard normal distribution function, accurate far into both tails."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * sc.erfc(-x / _SQRT2)
    return out if out.ndim else float(out)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return out if out.ndim else float(out)


def student_t_cdf(x, nu):
    """Distribution function of Student's t with ``nu`` degrees of freedom.

    Uses the regularized incomplete beta function. For ``x**2 < nu`` the
    complementary argument ``x**2 / (nu + x**2)`` is used so that huge ``nu``
    (near-normal regime) keeps full precision.
    """
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 0)):
        raise DomainError(f"degrees of freedom must be positive, got {nu}")
    x = np.asarray(x, dtype=float)
    x2 = x * x
    denom = nu + x2
    far = x2 > nu
    # P(T <= -|x|) by whichever incomplete-beta argument is further from 1
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = np.where(far, nu / denom, x2 / denom)
        ib = sc.betainc(np.where(far, 0.5 * nu, 0.5), np.where(far, 0.5, 0.5 * nu), arg)
    lower = np.where(far, 0.5 * ib, 0.5 - 0.5 * ib)
    lower = np.where(np.isinf(x), 0.0, lower)
    out = np.where(x > 0, 1.0 - lower, lower)
    return out if out.ndim else float(out)


def student_t_pdf(x, nu):
    nu = float(nu)
    if not nu > 0:
        raise DomainError(f"degrees of freedom must be positive, got {nu}")
    x = np.asarray(x, dtype=float)
    logc = sc.gammaln(0.5 * (nu + 1.0)) - sc.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    out = np.exp(logc - 0.5 * (nu + 1.0) * np.log1p(x * x / nu))
    return out if out.ndim else float(out)


def _quantile(cdf: Callable[[float], float], pdf: Callable[[float], float], p: float, tol: float = 1e-10) -> float:
    """Invert a continuous symmetric CDF by bracketing plus safeguarded Newton."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while cdf(lo) > p:
        lo *= 2.0
    while cdf(hi) < p:
        hi *= 2.0
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = cdf(x) - p
        if abs(f) <= tol * min(p, 1.0 - p) or hi - lo < 1e-15 * max(1.0, abs(x)):
            break
        if f > 0:
            hi = x
        else:
            lo = x
        d = pdf(x)
        step = x - f / d if d > 0 else None
        x = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return float(x)


def std_normal_quantile(p: float) -> float:
    return _quantile(std_normal_cdf, std_normal_pdf, p)


def student_t_quantile(p: float, nu: float) -> float:
    if not nu > 0:
        raise DomainError(f"degrees of freedom must be positive, got {nu}")
    return _quantile(lambda x: student_t_cdf(x, nu), lambda x: student_t_pdf(x, nu), p)


def gamma_fn(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("gamma_fn is only defined here for positive arguments")
    out = sc.gamma(x)
    return out if out.ndim else float(out)


def log_gamma(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma is only defined here for positive arguments")
    out = sc.gammaln(x)
    return out if out.ndim else float(out)


def bessel_k(nu, x):
    """Modified Bessel function of the second kind ``K_nu(x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("bessel_k requires x > 0")
    out = sc.kv(nu, x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EllipticalFamily:
    """Distribution of the mixing variable of an elliptical process ``X = V Z``.

    ``mcv = V**-2`` enters the crossing formulas only through its moment
    generating function. Build instances with :meth:`gaussian`,
    :meth:`student_t` or :meth:`custom`.
    """

    kind: str
    sigma: float = 1.0
    nu: float = math.inf
    custom_mgf: Optional[Callable] = None
    custom_mgf_deriv: Optional[Callable] = None
    custom_tail: Optional[Callable] = None

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "EllipticalFamily":
        if not sigma > 0:
            raise DomainError(f"sigma must be positive, got {sigma}")
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def student_t(cls, nu: float) -> "EllipticalFamily":
        if not nu > 0:
            raise DomainError(f"nu must be positive, got {nu}")
        return cls("t", nu=float(nu))

    @classmethod
    def custom(cls, mgf: Callable, mgf_deriv: Callable, tail: Callable) -> "EllipticalFamily":
        """Arbitrary mixture given ``M(x)``, ``M'(x)`` and ``u -> P(X(t0) >= u)``.

        All three callables must accept numpy arrays.
        """
        return cls("custom", custom_mgf=mgf, custom_mgf_deriv=mgf_deriv, custom_tail=tail)

    @property
    def label(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian(sigma={self.sigma:g})"
        if self.kind == "t":
            return f"t(nu={self.nu:g})"
        return "custom"

    def mgf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(x / self.sigma**2)
        if self.kind == "t":
            return np.exp(-0.5 * self.nu * np.log1p(-2.0 * x / self.nu))
        return np.asarray(self.custom_mgf(x), dtype=float)

    def mgf_deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(x / self.sigma**2) / self.sigma**2
        if self.kind == "t":
            return np.exp((-0.5 * self.nu - 1.0) * np.log1p(-2.0 * x / self.nu))
        return np.asarray(self.custom_mgf_deriv(x), dtype=float)

    def tail(self, u):
        """Pointwise exceedance probability ``P(X(t) >= u)``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            out = std_normal_cdf(-u / self.sigma)
        elif self.kind == "t":
            out = student_t_cdf(-u, self.nu)
        else:
            out = np.asarray(self.custom_tail(u), dtype=float)
        return out if np.ndim(out) else float(out)

    def mgf_inverse(self, r: float) -> float:
        """Return ``c >= 0`` with ``M(-c**2 / 2) = r`` for ``0 < r <= 1``."""
        if not 0.0 < r <= 1.0:
            raise DomainError(f"mgf_inverse needs r in (0, 1], got {r}")
        if self.kind == "gaussian":
            return self.sigma * math.sqrt(-2.0 * math.log(r))
        if self.kind == "t":
            return math.sqrt(self.nu * math.expm1(-2.0 * math.log(r) / self.nu))
        lo, hi = 0.0, 1.0
        while float(self.mgf(-0.5 * hi * hi)) > r:
            hi *= 2.0
            if hi > 1e8:
                raise DomainError("custom mgf does not decay below the requested level")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.mgf(-0.5 * mid * mid)) > r:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15 * max(1.0, hi):
                break
        return 0.5 * (lo + hi)


def _check_nonpositive(x):
    x = np.asarray(x, dtype=float)
    if np.any(x > 0):
        raise DomainError("mixture mgf is only evaluated at nonpositive arguments")
    return x


def mgf_V(family: EllipticalFamily, x):
    """Moment generating function of ``V**-2`` at ``x <= 0``."""
    out = family.mgf(_check_nonpositive(x))
    return out if np.ndim(out) else float(out)


def mgf_V_deriv(family: EllipticalFamily, x):
    out = family.mgf_deriv(_check_nonpositive(x))
    return out if np.ndim(out) else float(out)
