"""Band assembly, coverage tests and region-of-interest accounting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ffband.errors import InputError
from ffband.estimators import DiagonalCovInfo, diagonal_info, frag_mean, mean_estimate, two_sample_pooled
from ffband.euler import KNOT_TOL, ThresholdFunction
from ffband.process import FunctionalSample, Grid
from ffband.special import EllipticalFamily
from ffband.threshold import DEFAULT_CELLS, equidistant_knots, fair_threshold, kac_rice_threshold_function

METHODS = ("ff-z", "ff-t", "kr-z", "kr-t")
SIDES = ("two", "upper", "lower")


@dataclass
class Band:
    """Simultaneous band ``theta_hat -/+ u(t) * se(t)`` on a grid.

    One-sided bands carry ``-inf`` (``sided="upper"``) or ``+inf``
    (``sided="lower"``) on the open side.
    """

    grid: Grid
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    method: str
    sided: str
    threshold: ThresholdFunction
    std_error: np.ndarray
    family: str = ""
    roi_budget: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.threshold(self.grid.points))

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def nominal_level(self, a: float, b: float) -> float:
        """``p_t0 + a* (b - a)``: the fair level of the region ``[a, b]``."""
        return self.threshold.p_t0 + self.threshold.a_star * (b - a)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "lower", "upper", "u", "width"])
        for row in zip(self.grid.points, self.lower, self.upper, self.u, self.width):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        thr = self.threshold

        def num(x):
            x = float(x)
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        meta = {
            "method": self.method,
            "family": self.family,
            "alpha": self.alpha,
            "sided": self.sided,
            "threshold": {
                "knots": thr.knots.tolist(),
                "values": thr.values.tolist(),
                "coefficients": thr.coefficients.tolist(),
                "t0": thr.t0,
                "p_t0": thr.p_t0,
                "a_star": thr.a_star,
            },
            "roi_budget": {f"[{a:g},{b:g}]": v for (a, b), v in self.roi_budget.items()},
            "t": self.grid.points.tolist(),
            "center": self.center.tolist(),
            "lower": [num(x) for x in self.lower],
            "upper": [num(x) for x in self.upper],
        }
        return json.dumps(meta, indent=2)


def build_band(
    theta_hat,
    diag: DiagonalCovInfo,
    threshold: ThresholdFunction,
    alpha: float,
    sided: str = "two",
    method: str = "",
    family: str = "",
) -> Band:
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (diag.grid.size,):
        raise InputError("estimate and covariance information live on different grids")
    if sided not in SIDES:
        raise InputError(f"sided must be one of {SIDES}, got {sided!r}")
    if np.any(threshold.values <= 0):
        raise InputError("band thresholds must be positive")
    se = diag.std_error
    half = np.asarray(threshold(diag.grid.points)) * se
    lower = theta_hat - half if sided in ("two", "lower") else np.full_like(theta_hat, -np.inf)
    upper = theta_hat + half if sided in ("two", "upper") else np.full_like(theta_hat, np.inf)
    t0 = threshold.t0
    roi = {(0.0, 1.0): threshold.p_t0 + threshold.a_star}
    if t0 > 0:
        roi[(0.0, t0)] = threshold.p_t0 + threshold.a_star * t0
    if t0 < 1:
        roi[(t0, 1.0)] = threshold.p_t0 + threshold.a_star * (1.0 - t0)
    return Band(diag.grid, theta_hat, lower, upper, alpha, method, sided, threshold, se, family, roi)


@dataclass
class CoverResult:
    reject: bool
    exceed_set: np.ndarray


def test_covers(band: Band, theta0, where=None) -> CoverResult:
    """Reject when ``theta0`` leaves the band at one grid point or more.

    ``where`` optionally restricts the check to a boolean mask of grid points.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != band.center.shape:
        raise InputError("theta0 must have one value per grid point")
    out = (theta0 < band.lower) | (theta0 > band.upper)
    if where is not None:
        out &= where
    idx = np.flatnonzero(out)
    return CoverResult(bool(idx.size), idx)


test_covers.__test__ = False  # not a pytest test


@dataclass
class RoiResult:
    reject: bool
    nominal_level: float
    exceed_set: np.ndarray


def roi_mask(grid: Grid, a: float, b: float) -> np.ndarray:
    return (grid.points >= a - KNOT_TOL) & (grid.points <= b + KNOT_TOL)


def roi_budget(band: Band, a: float, b: float, require_anchor: bool = True) -> float:
    thr = band.threshold
    if not 0.0 <= a < b <= 1.0:
        raise InputError(f"bad region [{a}, {b}]")
    if require_anchor:
        on_knots = all(np.min(np.abs(thr.knots - x)) <= 1e-9 for x in (a, b))
        if not on_knots or min(abs(a - thr.t0), abs(b - thr.t0)) > 1e-9:
            raise InputError("a fair region must run between knots and start or end at t0")
    return band.nominal_level(a, b)


def roi_test(band: Band, theta0, roi, require_anchor: bool = True) -> RoiResult:
    """Coverage test restricted to ``roi = (a, b)`` and its nominal level."""
    a, b = map(float, roi)
    level = roi_budget(band, a, b, require_anchor)
    res = test_covers(band, theta0, roi_mask(band.grid, a, b))
    return RoiResult(res.reject, level, res.exceed_set)


# ----------------------------------------------------------------------------
# end-to-end constructors


def _family(method: str, nu: float) -> EllipticalFamily:
    return EllipticalFamily.student_t(nu) if method.endswith("-t") else EllipticalFamily.gaussian()


def solve_threshold(
    method: str,
    tau,
    grid: Grid,
    family: EllipticalFamily,
    alpha: float,
    t0: float = 0.0,
    n_cells: int = DEFAULT_CELLS,
    knots=None,
    sided: str = "two",
) -> ThresholdFunction:
    tsided = "two" if sided == "two" else "one"
    if method.startswith("kr"):
        return kac_rice_threshold_function(tau, family, alpha, tsided, grid)
    if method.startswith("ff"):
        kn = equidistant_knots(n_cells, t0) if knots is None else knots
        return fair_threshold(tau, family, alpha, t0, kn, grid, tsided)
    raise InputError(f"unknown method {method!r}; choose from {METHODS}")


def mean_band(
    sample: FunctionalSample,
    method: str = "ff-t",
    alpha: float = 0.05,
    t0: float = 0.0,
    n_cells: int = DEFAULT_CELLS,
    knots=None,
    sided: str = "two",
    tau_method: str = "auto",
) -> Band:
    """Band for the mean function of one sample, complete or fragmentary.

    The t variants use ``n - 1`` degrees of freedom (``min_t n_t - 1`` for fragments).
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; choose from {METHODS}")
    diag = diagonal_info(sample, tau_method)
    center = mean_estimate(sample) if sample.fully_observed else frag_mean(sample)
    nu = float(np.min(diag.n_local)) - 1.0
    fam = _family(method, nu)
    thr = solve_threshold(method, diag.tau, sample.grid, fam, alpha, t0, n_cells, knots, sided)
    tag = method if sample.fully_observed else method.replace("-", "-frag-")
    return build_band(center, diag, thr, alpha, sided, tag, fam.label)


def two_sample_band(
    sample_a: FunctionalSample,
    sample_b: FunctionalSample,
    method: str = "ff-t",
    alpha: float = 0.05,
    t0: float = 0.0,
    n_cells: int = DEFAULT_CELLS,
    knots=None,
    sided: str = "two",
) -> Band:
    """Band for the mean difference of two samples with the pooled covariance.

    The t variants use ``min_t (n_a(t) + n_b(t)) - 2`` degrees of freedom.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; choose from {METHODS}")
    diff, diag, _ = two_sample_pooled(sample_a, sample_b)
    nu = float(np.min(sample_a.local_counts + sample_b.local_counts)) - 2.0
    fam = _family(method, nu)
    thr = solve_threshold(method, diag.tau, sample_a.grid, fam, alpha, t0, n_cells, knots, sided)
    return build_band(diff, diag, thr, alpha, sided, method + "-2s", fam.label)
