"""Threshold solvers: constant Kac-Rice, the fair piecewise-linear threshold, p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ffband.errors import DomainError, InputError, SolverError
from ffband.euler import (
    DEFAULT_NODES,
    KNOT_TOL,
    ThresholdFunction,
    _cell_count,
    _check_tau,
    expected_euler_constant,
    quadrature_nodes,
    tau_l1_norm,
)
from ffband.process import Grid
from ffband.special import EllipticalFamily

DEFAULT_CELLS = 9
PVALUE_RANGE = (1e-6, 1.0 - 1e-6)


def _side_factor(sided: str) -> float:
    if sided == "two":
        return 0.5
    if sided == "one":
        return 1.0
    raise InputError(f"sided must be 'one' or 'two', got {sided!r}")


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _grid_points(grid, m: int) -> np.ndarray:
    if grid is None:
        return Grid.uniform(m).points
    pts = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float)
    if pts.size != m:
        raise InputError("tau must have one value per grid point")
    return pts


def kac_rice_threshold(tau_l1: float, family: EllipticalFamily, alpha: float, sided: str = "two") -> float:
    """Constant threshold solving the Kac-Rice equation ``E[phi_u] = alpha/2`` (or ``alpha``)."""
    _check_alpha(alpha)
    level = _side_factor(sided) * alpha
    if tau_l1 < 0:
        raise DomainError("tau_l1 must be nonnegative")

    def f(u):
        return expected_euler_constant(u, tau_l1, family) - level

    if f(0.0) <= 0:
        raise DomainError(f"no positive Kac-Rice threshold exists at level {level:g}")
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise SolverError("Kac-Rice threshold bracket failed")
    return optimize.brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def kac_rice_threshold_function(tau, family, alpha, sided="two", grid=None) -> ThresholdFunction:
    """:func:`kac_rice_threshold` wrapped as a constant :class:`ThresholdFunction` anchored at 0.

    ``p_t0`` is the pointwise level of the constant and ``a_star`` the rest of
    ``alpha``; for the constant threshold the split is not fair in general.
    """
    tau = _check_tau(tau)
    pts = _grid_points(grid, tau.size)
    u = kac_rice_threshold(tau_l1_norm(pts, tau), family, alpha, sided)
    p = 2.0 * float(family.tail(u)) if sided == "two" else float(family.tail(u))
    return ThresholdFunction.constant(u, 0.0, p_t0=p, a_star=alpha - p, sided=sided)


def equidistant_knots(n_cells: int = DEFAULT_CELLS, t0: float = 0.0) -> np.ndarray:
    """Knots ``j / n_cells`` with the anchor inserted when it is not already one."""
    if n_cells < 1:
        raise InputError("need at least one knot cell")
    if not 0.0 <= t0 <= 1.0:
        raise InputError(f"t0 must lie in [0, 1], got {t0}")
    k = np.arange(n_cells + 1) / n_cells
    if np.min(np.abs(k - t0)) > 1e-12:
        k = np.sort(np.append(k, t0))
    return k


@dataclass
class _Cell:
    a: float
    b: float
    t: np.ndarray
    w: np.ndarray
    tau: np.ndarray

    @property
    def length(self) -> float:
        return self.b - self.a


def _cells(knots, pts, tau, nodes):
    bp = np.union1d(pts, knots)
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        t, w = quadrature_nodes(a, b, bp, nodes)
        out.append(_Cell(a, b, t, w, np.interp(t, pts, tau)))
    return out


def _solve_slope(f, lo, hi, c_max, index):
    """Root of a monotone cell residual inside ``[lo, hi]``.

    One of ``lo``/``hi`` is the finite side where the threshold would reach
    zero; the other is None and the bracket grows outward from zero slope by
    factors of four, up to ``c_max`` doubled four times.
    """
    f0 = f(0.0)
    if f0 == 0.0:
        return 0.0
    # up cells pass ``lo`` and their residual falls with the slope; down cells
    # pass ``hi`` and theirs rises
    increasing = hi is not None
    root_positive = (f0 < 0) if increasing else (f0 > 0)
    a, fa = 0.0, f0
    if root_positive == increasing:
        b = hi if increasing else lo
        fb = f(b)
        if fa * fb > 0:
            raise SolverError(f"knot cell {index} cannot meet its budget with a nonnegative threshold")
    else:
        sgn = 1.0 if root_positive else -1.0
        step, limit = 1.0, c_max * 2.0**4
        while True:
            b = sgn * min(step, limit)
            fb = f(b)
            if fa * fb <= 0:
                break
            if step >= limit:
                raise SolverError(f"could not bracket the slope on knot cell {index}")
            a, fa, step = b, fb, step * 4.0
    return optimize.brentq(f, min(a, b), max(a, b), xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)


def fair_threshold(
    tau,
    family: EllipticalFamily,
    alpha: float,
    t0: float = 0.0,
    knots=None,
    grid=None,
    sided: str = "two",
    nodes: int = DEFAULT_NODES,
) -> ThresholdFunction:
    """Fair piecewise-linear threshold.

    The multiple-testing share ``a*`` is spread over the knot cells in
    proportion to their lengths: every cell gets crossing budget
    ``k * a* * length`` with ``k = 1/2`` for two-sided and ``1`` for one-sided
    bands, and ``k * p_t0 + k * a* = k * alpha``.

    Parameters
    ----------
    tau : array
        Roughness on the grid, strictly positive.
    alpha : float
        Level in (0, 1).
    t0 : float
        Anchor; must be one of the knots.
    knots : array, optional
        Sorted knots from 0 to 1; default :func:`equidistant_knots` with 9 cells.
    grid : Grid or array, optional
        Grid carrying ``tau``; default uniform with ``len(tau)`` points.
    """
    _check_alpha(alpha)
    k = _side_factor(sided)
    tau = _check_tau(tau)
    pts = _grid_points(grid, tau.size)
    knots = equidistant_knots(DEFAULT_CELLS, t0) if knots is None else np.asarray(knots, dtype=float)
    if knots.size < 2 or abs(knots[0]) > KNOT_TOL or abs(knots[-1] - 1) > KNOT_TOL or np.any(np.diff(knots) <= 0):
        raise InputError("knots must increase strictly from 0 to 1")
    hit = np.flatnonzero(np.abs(knots - t0) <= 1e-9)
    if hit.size == 0:
        raise InputError(f"t0={t0} must be one of the knots")
    k0 = int(hit[0])

    if k0 == knots.size - 1:
        # anchor at the right end: solve the mirrored problem and reflect back
        mirrored = fair_threshold(tau[::-1], family, alpha, 0.0, 1.0 - knots[::-1], 1.0 - pts[::-1], sided, nodes)
        return ThresholdFunction(knots, mirrored.values[::-1], t0, mirrored.p_t0, mirrored.a_star, sided)

    cells = _cells(knots, pts, tau, nodes)
    c0_cell = cells[k0]
    i0 = float(np.dot(c0_cell.w, c0_cell.tau))
    len0 = c0_cell.length

    def c0_of(a_share):
        r = 2.0 * math.pi * k * a_share * len0 / i0
        return 0.0 if r >= 1.0 else family.mgf_inverse(r)

    def outer(a_share):
        c0 = c0_of(a_share)
        b0 = i0 / (2.0 * math.pi) * float(family.mgf(-0.5 * c0 * c0))
        return float(family.tail(c0)) + b0 + k * a_share * (1.0 - len0) - k * alpha

    lo = alpha * 1e-12
    if outer(lo) >= 0:
        raise SolverError("fair threshold: outer level equation has no root in (0, alpha)")
    a_star = optimize.brentq(outer, lo, alpha, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    c0 = c0_of(a_star)
    if c0 <= 0:
        raise SolverError("fair threshold collapses to zero on the anchor cell")

    values = np.empty(knots.size)
    values[k0] = values[k0 + 1] = c0
    c_max = 50.0 * float(np.max(tau)) * max(c0, 1.0)

    for j in range(k0 + 1, len(cells)):
        cell = cells[j]
        u_a, target, rel = values[j], k * a_star * cell.length, cell.t - cell.a

        def f(s, cell=cell, u_a=u_a, target=target, rel=rel):
            return _cell_count(family, u_a + s * rel, s, cell.tau, cell.w, "up") - target

        s = _solve_slope(f, -u_a / cell.length, None, c_max, j)
        values[j + 1] = u_a + s * cell.length

    for j in range(k0 - 1, -1, -1):
        cell = cells[j]
        u_b, target, rel = values[j + 1], k * a_star * cell.length, cell.b - cell.t

        def f(s, cell=cell, u_b=u_b, target=target, rel=rel):
            return _cell_count(family, u_b - s * rel, s, cell.tau, cell.w, "down") - target

        s = _solve_slope(f, None, u_b / cell.length, c_max, j)
        values[j] = u_b - s * cell.length

    p_t0 = 2.0 * float(family.tail(c0)) if sided == "two" else float(family.tail(c0))
    return ThresholdFunction(knots, values, float(knots[k0]), p_t0, float(a_star), sided)


# ----------------------------------------------------------------------------
# p-values


@dataclass
class PValueResult:
    """Pointwise p-values on the grid and the global test p-value ``min_t p(t)``."""

    grid: Grid
    p: np.ndarray

    @property
    def global_p(self) -> float:
        return float(np.min(self.p))


class _ThresholdCache:
    def __init__(self, solve):
        self.solve = solve
        self.store = {}

    def __call__(self, alpha):
        key = float(alpha)
        if key not in self.store:
            try:
                self.store[key] = self.solve(key)
            except SolverError:
                # the band has degenerated at this level and excludes everything
                self.store[key] = None
        return self.store[key]


def pvalue_function(
    theta_hat,
    theta0,
    diag,
    family: EllipticalFamily,
    t0: float = 0.0,
    knots=None,
    sided: str = "two",
    method: str = "fair",
    n_scan: int = 48,
) -> PValueResult:
    """Smallest level at which the band stops covering ``theta0(t)``, per grid point.

    ``sided`` is ``"two"``, ``"upper"`` or ``"lower"`` as for bands. ``method``
    is ``"fair"`` or ``"kr"``. Levels are searched in ``(1e-6, 1 - 1e-6)``.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    m = diag.grid.size
    if theta_hat.shape != (m,) or theta0.shape != (m,):
        raise InputError("theta_hat and theta0 must have one value per grid point")
    se = diag.std_error
    diff = theta_hat - theta0
    if sided == "two":
        z = np.abs(diff) / se
        tsided = "two"
    elif sided == "upper":
        z = -diff / se
        tsided = "one"
    elif sided == "lower":
        z = diff / se
        tsided = "one"
    else:
        raise InputError(f"unknown sidedness {sided!r}")
    pts = diag.grid.points

    if method == "fair":
        kn = equidistant_knots(DEFAULT_CELLS, t0) if knots is None else knots

        def solve(a):
            return fair_threshold(diag.tau, family, a, t0, kn, pts, tsided)
    elif method == "kr":

        def solve(a):
            return kac_rice_threshold_function(diag.tau, family, a, tsided, pts)
    else:
        raise InputError(f"unknown method {method!r}")
    cache = _ThresholdCache(solve)

    def u_at(a):
        thr = cache(a)
        return np.zeros(m) if thr is None else np.asarray(thr(pts))

    la, lb = math.log(PVALUE_RANGE[0]), math.log(PVALUE_RANGE[1])
    scan = np.exp(np.linspace(la, lb, n_scan))
    scan[0], scan[-1] = PVALUE_RANGE
    u_scan = np.array([u_at(a) for a in scan])  # decreasing down the rows

    p = np.ones(m)
    for i in range(m):
        zi = z[i]
        if not zi > u_scan[-1, i]:
            continue  # covered at every level searched
        if zi >= u_scan[0, i]:
            p[i] = PVALUE_RANGE[0]
            continue
        j = int(np.argmax(u_scan[:, i] < zi))
        lo, hi = math.log(scan[j - 1]), math.log(scan[j])
        p[i] = math.exp(optimize.brentq(lambda x: u_at(math.exp(x))[i] - zi, lo, hi, xtol=1e-12))
    return PValueResult(diag.grid, p)
