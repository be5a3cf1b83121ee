"""Expected Euler characteristic of the excursion set above a threshold function.

For a standardized elliptical process ``X = V Z`` with roughness ``tau`` and
a continuous piecewise-linear threshold ``u`` anchored at ``t0``::

    E[phi] = P(X(t0) >= u(t0))
             + sum over cells left of t0  of  E[#down-crossings in cell]
             + sum over cells right of t0 of  E[#up-crossings in cell]

Each cell count is a "first" integral minus (up) or plus (down) a
"crossing" integral; both are evaluated by composite Gauss-Legendre
quadrature on the pieces cut out by the knots and the grid (tau is linearly
interpolated between grid points, u is linear on every piece).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy import special as sc

from ffband.errors import DomainError, InputError
from ffband.special import EllipticalFamily, std_normal_cdf, student_t_cdf

DEFAULT_NODES = 4
MAX_PIECE = 0.01  # longer quadrature pieces are split evenly
KNOT_TOL = 1e-12


class NegativeThresholdWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ThresholdFunction:
    """Continuous piecewise-linear threshold given by its values at the knots.

    ``knots`` run from 0 to 1 and contain the anchor ``t0``. ``p_t0`` is the
    pointwise level at ``t0`` (two-sided: ``2 P(X(t0) >= u(t0))``) and
    ``a_star`` the multiple-testing share returned by the fair solver.
    """

    knots: np.ndarray
    values: np.ndarray
    t0: float
    p_t0: float = math.nan
    a_star: float = math.nan
    sided: str = "two"

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.size < 2 or v.shape != k.shape:
            raise InputError("threshold needs matching knot and value arrays")
        if abs(k[0]) > KNOT_TOL or abs(k[-1] - 1.0) > KNOT_TOL or np.any(np.diff(k) <= 0):
            raise InputError("knots must increase strictly from 0 to 1")
        if np.min(np.abs(k - self.t0)) > 1e-9:
            raise InputError(f"anchor t0={self.t0} is not a knot")
        k, v = k.copy(), v.copy()
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t0", float(k[self.anchor_index]))

    @classmethod
    def constant(cls, u: float, t0: float = 0.0, **meta) -> "ThresholdFunction":
        knots = np.array([0.0, 1.0]) if t0 in (0.0, 1.0) else np.array([0.0, t0, 1.0])
        return cls(knots, np.full(knots.size, float(u)), t0, **meta)

    @classmethod
    def from_coefficients(cls, knots, coefficients, t0: float, **meta) -> "ThresholdFunction":
        """Build from hinge coefficients ``c_{-p}, ..., c_{q-1}`` (listed in knot order).

        ``c_0`` is the level on the cell right of ``t0``; ``c_j`` (j >= 1) adds
        slope from knot ``a_j`` on, ``c_{-j}`` adds slope left of ``a_{-j+1}``.
        """
        knots = np.asarray(knots, dtype=float)
        coefficients = np.asarray(coefficients, dtype=float)
        k0 = int(np.argmin(np.abs(knots - t0)))
        if coefficients.size != knots.size - 1:
            raise InputError("need one coefficient per knot cell")
        c = {j - k0: coefficients[j] for j in range(coefficients.size)}
        values = np.empty(knots.size)
        values[k0] = c[0]
        slope = 0.0
        for j in range(k0 + 1, knots.size):
            if j - 1 > k0:
                slope += c[j - 1 - k0]
            values[j] = values[j - 1] + slope * (knots[j] - knots[j - 1])
        slope = 0.0
        for j in range(k0 - 1, -1, -1):
            slope += c[j - k0]
            values[j] = values[j + 1] - slope * (knots[j + 1] - knots[j])
        return cls(knots, values, t0, **meta)

    @property
    def anchor_index(self) -> int:
        return int(np.argmin(np.abs(self.knots - self.t0)))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    @property
    def coefficients(self) -> np.ndarray:
        """Hinge coefficients in knot order (inverse of :meth:`from_coefficients`)."""
        k0, s = self.anchor_index, self.slopes
        out = np.empty(s.size)
        for j in range(s.size):
            rel = j - k0
            if rel == 0:
                out[j] = self.values[k0]
            elif rel > 0:
                out[j] = s[j] - s[j - 1]
            elif rel == -1:
                out[j] = s[j]
            else:
                out[j] = s[j] - s[j + 1]
        return out

    @property
    def u_t0(self) -> float:
        return float(self.values[self.anchor_index])

    def __call__(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.knots, self.values)
        return out if np.ndim(out) else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.knots.size - 2)
        return self.slopes[idx]

    def shifted(self, c: float) -> "ThresholdFunction":
        return replace(self, values=self.values + c)

    def cells(self):
        return list(zip(self.knots[:-1], self.knots[1:]))


# ----------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def _legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def quadrature_nodes(a: float, b: float, breakpoints, nodes: int = DEFAULT_NODES):
    """Composite Gauss-Legendre nodes on ``[a, b]`` split at ``breakpoints``.

    Pieces longer than ``MAX_PIECE`` are cut into equal parts, so coarse
    grids get the same accuracy as the default one.
    """
    bp = np.asarray(breakpoints, dtype=float)
    inner = bp[(bp > a + KNOT_TOL) & (bp < b - KNOT_TOL)]
    edges = np.concatenate([[a], inner, [b]])
    parts = np.ceil(np.diff(edges) / MAX_PIECE - 1e-9).astype(int)
    if np.any(parts > 1):
        edges = np.concatenate(
            [np.linspace(lo, hi, k + 1)[:-1] for lo, hi, k in zip(edges[:-1], edges[1:], parts)] + [[b]]
        )
    x, w = _legendre(nodes)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("roughness tau must be strictly positive")
    return tau


# ----------------------------------------------------------------------------
# integrands (vectorized over quadrature nodes)


def first_integrand(family: EllipticalFamily, u, slope, tau):
    """``tau / (2 pi) * M(-(u**2 + u'**2 / tau**2) / 2)``."""
    return tau / (2.0 * math.pi) * family.mgf(-0.5 * (u * u + (slope / tau) ** 2))


def _t_crossing_factor(nu: float) -> float:
    return math.exp(sc.gammaln(0.5 * (nu + 1.0)) - sc.gammaln(0.5 * (nu + 2.0))) * math.sqrt((nu + 1.0) * math.pi)


def _custom_inner(family: EllipticalFamily, u: float, z0: float) -> float:
    """``int_{z0}^inf M'(-(u**2 + z**2) / 2) dz`` truncated at 1e-14 of the peak."""

    def f(z):
        return float(family.mgf_deriv(-0.5 * (u * u + z * z)))

    zp = max(z0, 0.0)
    peak = f(zp)
    if peak <= 0.0:
        return 0.0
    big = max(2.0 * zp, 1.0)
    while f(big) > 1e-14 * peak:
        big *= 2.0
        if big > 1e12:
            break
    lo = max(z0, -big)
    pts = [0.0] if lo < 0.0 < big else None
    val, _ = integrate.quad(f, lo, big, epsabs=1e-13, epsrel=1e-12, limit=400, points=pts)
    return val


def crossing_integrand(family: EllipticalFamily, u, slope, tau, direction: str):
    """Inner y-integral of the crossing term, times ``u' / (2 pi tau)``.

    ``direction="up"`` uses ``(y + u')`` (subtracted right of t0),
    ``"down"`` uses ``(y - u')`` (added left of t0).
    """
    u = np.asarray(u, dtype=float)
    tau = np.asarray(tau, dtype=float)
    slope = np.broadcast_to(np.asarray(slope, dtype=float), u.shape)
    sign = -1.0 if direction == "up" else 1.0
    if family.kind == "gaussian":
        sg = family.sigma
        return (
            slope / (sg * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * u * u / sg**2)
            * std_normal_cdf(sign * slope / (sg * tau))
        )
    if family.kind == "t":
        nu = family.nu
        base = 1.0 + u * u / nu
        a = tau * np.sqrt(nu * base / (nu + 1.0))
        lead = np.exp((-0.5 * nu - 1.0) * np.log(base))
        return (
            slope / (2.0 * math.pi * tau) * lead * _t_crossing_factor(nu) * a
            * student_t_cdf(sign * slope / a, nu + 1.0)
        )
    out = np.zeros(u.shape)
    for i in np.ndindex(u.shape):
        if slope[i] == 0.0:
            continue
        z0 = -sign * slope[i] / tau[i]
        out[i] = slope[i] / (2.0 * math.pi) * _custom_inner(family, float(u[i]), z0)
    return out


def _cell_count(family, u, slope, tau, w, direction):
    first = first_integrand(family, u, slope, tau)
    if np.all(slope == 0):
        return float(np.dot(w, first))
    cross = crossing_integrand(family, u, slope, tau, direction)
    if direction == "up":
        return float(np.dot(w, first - cross))
    return float(np.dot(w, first + cross))


# ----------------------------------------------------------------------------
# public evaluators


def _breakpoints(u: ThresholdFunction, grid_points):
    return np.union1d(np.asarray(grid_points, dtype=float), u.knots)


def crossing_budget_on_interval(
    u: ThresholdFunction,
    grid_points,
    tau,
    family: EllipticalFamily,
    interval,
    direction: str,
    nodes: int = DEFAULT_NODES,
) -> float:
    """Expected number of up- or down-crossings of ``u`` inside ``interval``."""
    if direction not in ("up", "down"):
        raise InputError("direction must be 'up' or 'down'")
    a, b = map(float, interval)
    if not 0.0 <= a < b <= 1.0:
        raise InputError(f"bad interval {interval}")
    tau = _check_tau(tau)
    t, w = quadrature_nodes(a, b, _breakpoints(u, grid_points), nodes)
    return _cell_count(family, u(t), u.derivative(t), np.interp(t, grid_points, tau), w, direction)


def expected_euler(
    u: ThresholdFunction,
    grid_points,
    tau,
    family: EllipticalFamily,
    t0: float | None = None,
    nodes: int = DEFAULT_NODES,
    return_parts: bool = False,
):
    """Expected Euler characteristic ``E[phi_{u,X}(t0)]``.

    ``tau`` holds the roughness at ``grid_points``. With ``return_parts`` the
    tail term and the per-cell crossing budgets are returned as well.
    """
    grid_points = np.asarray(grid_points, dtype=float)
    tau = _check_tau(tau)
    if tau.shape != grid_points.shape:
        raise InputError("tau must have one value per grid point")
    t0 = u.t0 if t0 is None else float(t0)
    if np.min(np.abs(u.knots - t0)) > 1e-9:
        raise InputError(f"t0={t0} is not a knot of the threshold")
    if np.any(u.values < 0):
        warnings.warn("threshold takes negative values", NegativeThresholdWarning, stacklevel=2)
    tail = float(family.tail(u(t0)))
    budgets = []
    for a, b in u.cells():
        direction = "down" if b <= t0 + KNOT_TOL else "up"
        budgets.append(crossing_budget_on_interval(u, grid_points, tau, family, (a, b), direction, nodes))
    total = tail + math.fsum(budgets)
    if return_parts:
        return total, tail, budgets
    return total


def expected_euler_constant(u: float, tau_l1: float, family: EllipticalFamily) -> float:
    """Constant-threshold value ``P(X >= u) + ||tau||_1 / (2 pi) * M(-u**2 / 2)``.

    Compare with ``alpha / 2`` for two-sided and with ``alpha`` for one-sided bands.
    """
    if tau_l1 < 0:
        raise DomainError("tau_l1 must be nonnegative")
    return float(family.tail(u)) + tau_l1 / (2.0 * math.pi) * float(family.mgf(-0.5 * u * u))


def tau_l1_norm(grid_points, tau) -> float:
    """Integral of the linearly interpolated roughness (trapezoid rule, exact)."""
    grid_points = np.asarray(grid_points, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return float(np.sum(0.5 * (tau[1:] + tau[:-1]) * np.diff(grid_points)))
